//! PCA through a cyclic Jacobi eigensolver on the sample covariance.

use super::Matrix;
use crate::error::{Error, Result};

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// Orthonormal components as rows, in descending eigenvalue order.
    pub components: Matrix,
    pub eigenvalues: Vec<f64>,
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as columns, in
/// the solver's native order. Sweeps visit `(p, q)` pairs row by row and
/// stop once the off-diagonal Frobenius norm falls below `1e-12` relative
/// to the full norm.
pub fn jacobi_eigh(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape("jacobi_eigh needs a square matrix"));
    }
    let mut m = a.clone();
    let mut v = Matrix::zeros(n, n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    let norm = m.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    let threshold = JACOBI_TOL * norm.max(f64::MIN_POSITIVE);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = off_diagonal_norm(&m);
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    let np = c * akp - s * akq;
                    let nq = s * akp + c * akq;
                    m.set(k, p, np);
                    m.set(p, k, np);
                    m.set(k, q, nq);
                    m.set(q, k, nq);
                }
                m.set(p, p, m.get(p, p) - t * apq);
                m.set(q, q, m.get(q, q) + t * apq);
                m.set(p, q, 0.0);
                m.set(q, p, 0.0);
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    Ok(((0..n).map(|i| m.get(i, i)).collect(), v))
}

fn off_diagonal_norm(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m.get(i, j).powi(2);
            }
        }
    }
    s.sqrt()
}

/// PCA of the rows of `x`: covariance with divisor `N - 1`, components
/// sorted by descending eigenvalue, each component's largest-magnitude
/// entry made positive.
pub fn pca_fit(x: &Matrix) -> Result<PcaBasis> {
    if x.rows() < 2 {
        return Err(Error::invalid(format!("pca needs at least 2 rows, got {}", x.rows())));
    }
    let cov = x.covariance()?;
    let (vals, vecs) = jacobi_eigh(&cov)?;
    let d = vals.len();
    let mut order: Vec<usize> = (0..d).collect();
    // Stable sort keeps the solver's order among exact ties.
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let mut components = Matrix::zeros(d, d);
    let mut eigenvalues = Vec::with_capacity(d);
    for (r, &c) in order.iter().enumerate() {
        let mut vec: Vec<f64> = (0..d).map(|k| vecs.get(k, c)).collect();
        let pivot = vec
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if v.abs() > vec[best].abs() { i } else { best });
        if vec[pivot] < 0.0 {
            vec.iter_mut().for_each(|v| *v = -*v);
        }
        components.row_mut(r).copy_from_slice(&vec);
        // Round-off can leave tiny negative values on null directions.
        eigenvalues.push(vals[c].max(0.0));
    }
    Ok(PcaBasis {
        mean: x.column_means(),
        components,
        eigenvalues,
    })
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Keep only the top `k` components.
    pub fn truncated(&self, k: usize) -> Self {
        let k = k.min(self.eigenvalues.len());
        let d = self.dim();
        Self {
            mean: self.mean.clone(),
            components: Matrix::new(k, d, self.components.data()[..k * d].to_vec())
                .expect("prefix of rows"),
            eigenvalues: self.eigenvalues[..k].to_vec(),
        }
    }

    /// Coordinates of `x`'s rows on the components (centered, unscaled).
    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        let d = self.dim();
        if x.cols() != d {
            return Err(Error::shape(format!(
                "basis has dimension {d}, data has {}",
                x.cols()
            )));
        }
        let k = self.components.rows();
        let mut out = Matrix::zeros(x.rows(), k);
        let mut centered = vec![0.0; d];
        for (i, r) in x.iter_rows().enumerate() {
            for ((c, &v), &mu) in centered.iter_mut().zip(r).zip(&self.mean) {
                *c = v - mu;
            }
            for j in 0..k {
                let comp = self.components.row(j);
                out.set(i, j, comp.iter().zip(&centered).map(|(a, b)| a * b).sum());
            }
        }
        Ok(out)
    }
}

/// Project onto the components and scale each coordinate by
/// `1 / sqrt(eigenvalue + eps)`.
pub fn pca_whiten(x: &Matrix, basis: &PcaBasis, eps: f64) -> Result<Matrix> {
    let mut y = basis.project(x)?;
    let scale: Vec<f64> = basis
        .eigenvalues
        .iter()
        .map(|&l| 1.0 / (l + eps).sqrt())
        .collect();
    for i in 0..y.rows() {
        for (v, s) in y.row_mut(i).iter_mut().zip(&scale) {
            *v *= s;
        }
    }
    Ok(y)
}
