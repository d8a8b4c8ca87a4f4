use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged rows"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    /// Flatten each batch item of a tensor into one row.
    pub fn from_tensor<T: Real>(t: &Tensor<T>) -> Self {
        Self {
            rows: t.batch(),
            cols: t.item_len(),
            data: t.data().iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Keep the first `k` columns.
    pub fn truncate_cols(&self, k: usize) -> Self {
        let k = k.min(self.cols);
        let mut data = Vec::with_capacity(self.rows * k);
        for r in self.iter_rows() {
            data.extend_from_slice(&r[..k]);
        }
        Self {
            rows: self.rows,
            cols: k,
            data,
        }
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.cols];
        for r in self.iter_rows() {
            for (a, &v) in m.iter_mut().zip(r) {
                *a += v;
            }
        }
        let n = self.rows.max(1) as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// Sample covariance with divisor `N - 1`.
    pub fn covariance(&self) -> Result<Self> {
        if self.rows < 2 {
            return Err(Error::invalid(format!(
                "covariance needs at least 2 rows, got {}",
                self.rows
            )));
        }
        let mean = self.column_means();
        let d = self.cols;
        let mut c = Self::zeros(d, d);
        let mut centered = vec![0.0; d];
        for r in self.iter_rows() {
            for ((c0, &v), &mu) in centered.iter_mut().zip(r).zip(&mean) {
                *c0 = v - mu;
            }
            for i in 0..d {
                let ci = centered[i];
                let row = &mut c.data[i * d..(i + 1) * d];
                for j in i..d {
                    row[j] += ci * centered[j];
                }
            }
        }
        let denom = (self.rows - 1) as f64;
        for i in 0..d {
            for j in i..d {
                let v = c.get(i, j) / denom;
                c.set(i, j, v);
                c.set(j, i, v);
            }
        }
        Ok(c)
    }
}
