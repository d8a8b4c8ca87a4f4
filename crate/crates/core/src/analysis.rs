//! Latent-space analyses: per-class PCA variance profiles, 2-D projections
//! and interpolation grids, plus their CSV and PGM exports.

use std::fmt::Write as _;

use rand::Rng;

use crate::cluster::{pca_fit, Matrix};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::nn::{Real, Tensor};
use crate::rng::SeededRng;
use crate::train::{mix_latents, mixing_target};

pub const DEFAULT_CUTOFF: usize = 40;
pub const PGM_SEPARATOR: u8 = 128;

/// Explained-variance shares of the leading components, averaged over
/// classes.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaProfile {
    pub cutoff: usize,
    /// What the caller asked for before clamping to the latent dimension.
    pub requested_cutoff: usize,
    pub mean_share: Vec<f64>,
    /// Population standard deviation across classes.
    pub std_share: Vec<f64>,
    pub classes_used: Vec<usize>,
}

impl PcaProfile {
    pub fn was_clamped(&self) -> bool {
        self.cutoff != self.requested_cutoff
    }
}

/// The cutoff actually usable for `dim`-dimensional latents.
pub fn effective_cutoff(requested: usize, dim: usize) -> usize {
    requested.min(dim)
}

/// Fit a PCA per class, keep the top `cutoff` eigenvalues, normalize them
/// to sum 1, then take mean and standard deviation across classes.
pub fn class_pca_profile(z: &Matrix, labels: &[usize], cutoff: usize) -> Result<PcaProfile> {
    if labels.len() != z.rows() {
        return Err(Error::shape(format!(
            "{} latent rows but {} labels",
            z.rows(),
            labels.len()
        )));
    }
    if cutoff == 0 {
        return Err(Error::invalid("cutoff must be at least 1"));
    }
    let k = effective_cutoff(cutoff, z.cols());
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut shares: Vec<Vec<f64>> = Vec::with_capacity(classes.len());
    for &class in &classes {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if rows.len() < 2 {
            return Err(Error::invalid(format!(
                "class {class} has {} sample(s); a PCA needs at least 2",
                rows.len()
            )));
        }
        let basis = pca_fit(&z.select_rows(&rows))?;
        let top = &basis.eigenvalues[..k];
        let total: f64 = top.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid(format!("class {class} has zero latent variance")));
        }
        shares.push(top.iter().map(|v| v / total).collect());
    }
    let n = shares.len() as f64;
    let mean_share: Vec<f64> = (0..k).map(|d| shares.iter().map(|s| s[d]).sum::<f64>() / n).collect();
    let std_share = (0..k)
        .map(|d| {
            let var = shares.iter().map(|s| (s[d] - mean_share[d]).powi(2)).sum::<f64>() / n;
            var.sqrt()
        })
        .collect();
    Ok(PcaProfile {
        cutoff: k,
        requested_cutoff: cutoff,
        mean_share,
        std_share,
        classes_used: classes,
    })
}

/// Coordinates on the two leading global principal components.
pub fn project_2d(z: &Matrix) -> Result<Matrix> {
    if z.cols() < 2 {
        return Err(Error::invalid("2-D projection needs at least 2 dimensions"));
    }
    pca_fit(z)?.truncated(2).project(z)
}

/// Encode a dataset in batches into an `[N, latent]` matrix.
pub fn encode_dataset<T: Real>(model: &ModelParams<T>, ds: &LabeledDataset<T>, batch: usize) -> Result<Matrix> {
    let latent = model.spec.latent_dim;
    let mut data = Vec::with_capacity(ds.len() * latent);
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let z = model.encode(&ds.images.select(chunk))?;
        data.extend(z.data().iter().map(|v| v.as_f64()));
    }
    Matrix::new(ds.len(), latent, data)
}

/// Decoded interpolants, one row per pair and one column per α.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationGrid<T: Real = f32> {
    pub rows: usize,
    pub cols: usize,
    pub alphas: Vec<f64>,
    /// `[rows, cols, C, H, W]`.
    pub images: Tensor<T>,
}

impl<T: Real> InterpolationGrid<T> {
    pub fn cell(&self, row: usize, col: usize) -> &[T] {
        let n = self.images.len() / (self.rows * self.cols).max(1);
        let at = (row * self.cols + col) * n;
        &self.images.data()[at..at + n]
    }
}

/// `n` evenly spaced values from 0 to 1 inclusive.
pub fn even_alphas(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|s| s as f64 / (n - 1) as f64).collect(),
    }
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::invalid("interpolation coefficients must lie in [0, 1]"));
    }
    if alphas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("interpolation coefficients must be ascending"));
    }
    Ok(())
}

fn check_pairs<T: Real>(x_i: &Tensor<T>, x_j: &Tensor<T>) -> Result<()> {
    x_i.check_same_shape(x_j)?;
    if x_i.batch() == 0 {
        return Err(Error::invalid("no pairs given"));
    }
    Ok(())
}

/// `grid[r][s] = decode(mix(encode(x_i[r]), encode(x_j[r]), alphas[s]))`.
pub fn interpolation_grid<T: Real>(
    model: &ModelParams<T>,
    x_i: &Tensor<T>,
    x_j: &Tensor<T>,
    alphas: &[f64],
) -> Result<InterpolationGrid<T>> {
    check_pairs(x_i, x_j)?;
    check_alphas(alphas)?;
    let rows = x_i.batch();
    let cols = alphas.len();
    let item = x_i.item_len();
    let z_i = model.encode(x_i)?;
    let z_j = model.encode(x_j)?;
    let mut cells = vec![T::zero(); rows * cols * item];
    for (s, &a) in alphas.iter().enumerate() {
        let dec = model.decode(&mix_latents(&z_i, &z_j, a)?)?;
        for r in 0..rows {
            let at = (r * cols + s) * item;
            cells[at..at + item].copy_from_slice(dec.item(r));
        }
    }
    let mut shape = vec![rows, cols];
    shape.extend_from_slice(&x_i.shape()[1..]);
    Ok(InterpolationGrid {
        rows,
        cols,
        alphas: alphas.to_vec(),
        images: Tensor::new(shape, cells)?,
    })
}

fn mse<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&u, &v)| (u.as_f64() - v.as_f64()).powi(2))
        .sum::<f64>()
        / a.len() as f64
}

/// Fraction of pairs whose decoded mix is closer to the reconstruction of
/// the consistency target than to that of the other input.
pub fn mixing_side_score<T: Real>(model: &ModelParams<T>, x_i: &Tensor<T>, x_j: &Tensor<T>, alpha: f64) -> Result<f64> {
    check_pairs(x_i, x_j)?;
    if !(0.0..=1.0).contains(&alpha) || alpha == 0.5 {
        return Err(Error::invalid("alpha must lie in [0, 1] and differ from 0.5"));
    }
    let z_i = model.encode(x_i)?;
    let z_j = model.encode(x_j)?;
    let rec_i = model.decode(&z_i)?;
    let rec_j = model.decode(&z_j)?;
    let mixed = model.decode(&mix_latents(&z_i, &z_j, alpha)?)?;
    let (near, far) = if mixing_target(0, 1, alpha) == 0 {
        (&rec_i, &rec_j)
    } else {
        (&rec_j, &rec_i)
    };
    let n = x_i.batch();
    let hits = (0..n)
        .filter(|&r| mse(mixed.item(r), near.item(r)) < mse(mixed.item(r), far.item(r)))
        .count();
    Ok(hits as f64 / n as f64)
}

/// `count` seeded index pairs with distinct members.
pub fn sample_pairs(n: usize, count: usize, rng: &mut SeededRng) -> Result<Vec<(usize, usize)>> {
    if n < 2 {
        return Err(Error::invalid("need at least two samples to form pairs"));
    }
    Ok((0..count)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        })
        .collect())
}

fn to_gray(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary PGM of the grid, cells tiled row-major with one-pixel separators.
/// Multi-channel images are shown as their channel mean.
pub fn grid_to_pgm<T: Real>(grid: &InterpolationGrid<T>) -> Result<Vec<u8>> {
    let shape = grid.images.shape();
    let (c, h, w) = match shape.len() {
        5 => (shape[2], shape[3], shape[4]),
        4 => (1, shape[2], shape[3]),
        _ => {
            return Err(Error::shape(format!(
                "grid images must be [rows, cols, C, H, W], got {shape:?}"
            )))
        }
    };
    if grid.rows == 0 || grid.cols == 0 {
        return Err(Error::invalid("empty grid"));
    }
    let width = grid.cols * w + grid.cols - 1;
    let height = grid.rows * h + grid.rows - 1;
    let mut pix = vec![PGM_SEPARATOR; width * height];
    for r in 0..grid.rows {
        for s in 0..grid.cols {
            let cell = grid.cell(r, s);
            for y in 0..h {
                for x in 0..w {
                    let v = (0..c).map(|ch| cell[(ch * h + y) * w + x].as_f64()).sum::<f64>() / c as f64;
                    pix[(r * (h + 1) + y) * width + s * (w + 1) + x] = to_gray(v);
                }
            }
        }
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(&pix);
    Ok(out)
}

pub fn profile_csv(p: &PcaProfile) -> String {
    let mut s = String::from("component_index,mean_share,std_share\n");
    for (i, (m, sd)) in p.mean_share.iter().zip(&p.std_share).enumerate() {
        writeln!(s, "{},{m},{sd}", i + 1).expect("write to string");
    }
    s
}

pub fn projection_csv(proj: &Matrix, labels: &[usize]) -> Result<String> {
    if proj.cols() != 2 || proj.rows() != labels.len() {
        return Err(Error::shape("projection must be [N, 2] with one label per row"));
    }
    let mut s = String::from("x,y,label\n");
    for (row, l) in proj.iter_rows().zip(labels) {
        writeln!(s, "{},{},{l}", row[0], row[1]).expect("write to string");
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ArchitectureSpec};
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, scale: &[f64], seed: u64) -> Matrix {
        let mut rng = SeededRng::new(seed);
        let data = (0..n * d)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale[i % d]
            })
            .collect();
        Matrix::new(n, d, data).unwrap()
    }

    #[test]
    fn rank_one_class() {
        let z = Matrix::new(4, 3, vec![1.0, 2.0, 3.0, 2.0, 4.0, 6.0, -1.0, -2.0, -3.0, 0.0, 0.0, 0.0]).unwrap();
        let p = class_pca_profile(&z, &[5, 5, 5, 5], 3).unwrap();
        assert!((p.mean_share[0] - 1.0).abs() < 1e-12);
        assert!(p.mean_share[1].abs() < 1e-12 && p.mean_share[2].abs() < 1e-12);
        assert_eq!(p.classes_used, vec![5]);
    }

    #[test]
    fn identical_classes_have_no_spread() {
        let a = gaussian(50, 3, &[3.0, 2.0, 1.0], 1);
        let mut rows: Vec<Vec<f64>> = a.iter_rows().map(<[f64]>::to_vec).collect();
        rows.extend(a.iter_rows().map(|r| r.iter().map(|v| v + 10.0).collect::<Vec<_>>()));
        let z = Matrix::from_rows(&rows).unwrap();
        let labels: Vec<usize> = (0..100).map(|i| i / 50).collect();
        let p = class_pca_profile(&z, &labels, 3).unwrap();
        assert!(p.std_share.iter().all(|&s| s < 1e-9));
    }

    #[test]
    fn cutoff_clamp_and_errors() {
        let z = gaussian(10, 2, &[1.0, 1.0], 2);
        let p = class_pca_profile(&z, &[0; 10], DEFAULT_CUTOFF).unwrap();
        assert_eq!(p.cutoff, 2);
        assert!(p.was_clamped());
        let mut labels = vec![0; 10];
        labels[9] = 1;
        let err = class_pca_profile(&z, &labels, 2).unwrap_err();
        assert!(err.to_string().contains("class 1"));
    }

    #[test]
    fn projection_basics() {
        let z = Matrix::from_rows(&[vec![2.0, 0.0], vec![-2.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]).unwrap();
        let p = project_2d(&z).unwrap();
        for i in 0..4 {
            assert!((p.get(i, 0).abs() - z.get(i, 0).abs()).abs() < 1e-12);
            assert!((p.get(i, 1).abs() - z.get(i, 1).abs()).abs() < 1e-12);
        }
        let line = Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]).unwrap();
        let p = project_2d(&line).unwrap();
        assert!((0..3).all(|i| p.get(i, 1).abs() < 1e-12));
    }

    fn toy_model() -> ModelParams<f32> {
        build_model(&ArchitectureSpec::mlp_toy(4, vec![8], 2), &mut SeededRng::new(3)).unwrap()
    }

    #[test]
    fn grid_endpoints_and_layout() {
        let m = toy_model();
        let xi = Tensor::<f32>::from_fn(vec![3, 4, 1, 1], |i| (i as f32 * 0.13).sin().abs());
        let xj = Tensor::<f32>::from_fn(vec![3, 4, 1, 1], |i| (i as f32 * 0.29).cos().abs());
        let g = interpolation_grid(&m, &xi, &xj, &even_alphas(11)).unwrap();
        assert_eq!(g.images.shape(), &[3, 11, 4, 1, 1]);
        assert!((g.alphas[1] - 0.1).abs() < 1e-15);
        let rec_i = m.decode(&m.encode(&xi).unwrap()).unwrap();
        let rec_j = m.decode(&m.encode(&xj).unwrap()).unwrap();
        for r in 0..3 {
            assert_eq!(g.cell(r, 0), rec_i.item(r));
            assert_eq!(g.cell(r, 10), rec_j.item(r));
        }
        let same = interpolation_grid(&m, &xi, &xi, &[0.0, 0.3, 1.0]).unwrap();
        assert_eq!(same.cell(1, 0), same.cell(1, 2));
        assert!(interpolation_grid(&m, &xi, &xj, &[0.0, 1.5]).is_err());
    }

    #[test]
    fn side_score_endpoint_and_range() {
        let m = toy_model();
        let xi = Tensor::<f32>::from_fn(vec![8, 4, 1, 1], |i| (i as f32 * 0.7).sin().abs());
        let xj = Tensor::<f32>::from_fn(vec![8, 4, 1, 1], |i| (i as f32 * 1.3).cos().abs());
        assert_eq!(mixing_side_score(&m, &xi, &xj, 0.0).unwrap(), 1.0);
        let s = mixing_side_score(&m, &xi, &xj, 0.25).unwrap();
        assert!((0.0..=1.0).contains(&s));
        assert!(mixing_side_score(&m, &xi, &xj, 0.5).is_err());
    }

    #[test]
    fn pgm_tiling() {
        let g = InterpolationGrid {
            rows: 2,
            cols: 3,
            alphas: vec![0.0, 0.5, 1.0],
            images: Tensor::<f32>::full(vec![2, 3, 1, 2, 2], 1.0),
        };
        let bytes = grid_to_pgm(&g).unwrap();
        let header = b"P5\n8 5\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let pix = &bytes[header.len()..];
        assert_eq!(pix.len(), 40);
        assert_eq!(pix[0], 255);
        assert_eq!(pix[2], PGM_SEPARATOR);
        assert_eq!(pix[2 * 8], PGM_SEPARATOR);
    }

    #[test]
    fn csv_shapes() {
        let p = PcaProfile {
            cutoff: 2,
            requested_cutoff: 2,
            mean_share: vec![0.75, 0.25],
            std_share: vec![0.0, 0.0],
            classes_used: vec![0],
        };
        assert_eq!(profile_csv(&p), "component_index,mean_share,std_share\n1,0.75,0\n2,0.25,0\n");
        let proj = Matrix::from_rows(&[vec![0.5, -1.0]]).unwrap();
        assert_eq!(projection_csv(&proj, &[3]).unwrap(), "x,y,label\n0.5,-1,3\n");
    }
}
