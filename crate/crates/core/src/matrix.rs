//! Dense row-major `f64` matrices.
//!
//! Only the handful of operations the PLS fit and the feature extraction
//! need: products, transposes, column statistics and norms. Every
//! constructor rejects NaN and infinities.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for Matrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        Matrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::new",
                format!("{rows}x{cols}"),
                format!("{} values", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::shape(
                "Matrix::from_rows",
                format!("{cols} columns"),
                format!("row of {}", bad.len()),
            ));
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    /// Builds a matrix from a closure; the closure must return finite values.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix::new(rows, cols, data)
    }

    /// Column vector from a slice.
    pub fn column_vector(v: &[f64]) -> Result<Self> {
        Matrix::new(v.len(), 1, v.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Copies the selected rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            let out_row = &mut out[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Matrix::new(self.rows, other.cols, out)
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.get(r, c));
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// `selfᵀ · v` without materialising the transpose.
    pub fn t_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::shape(
                "t_mul_vec",
                format!("{}x{}", self.rows, self.cols),
                format!("vector of {}", v.len()),
            ));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &s) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += a * s;
            }
        }
        Ok(out)
    }

    /// `self · v`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::shape(
                "mul_vec",
                format!("{}x{}", self.rows, self.cols),
                format!("vector of {}", v.len()),
            ));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), v)).collect())
    }

    /// `self -= a · bᵀ` for column vectors `a` (rows) and `b` (cols).
    pub(crate) fn sub_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (x, &bc) in row.iter_mut().zip(b) {
                *x -= ar * bc;
            }
        }
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (m, &v) in means.iter_mut().zip(self.row(r)) {
                *m += v;
            }
        }
        let n = self.rows.max(1) as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// Centers each column and divides by its sample standard deviation
    /// (`n - 1` divisor). Columns whose deviation falls below `eps` are only
    /// centered, and their scale is recorded as 1.
    pub fn column_standardize(&self, eps: f64) -> Result<(Matrix, Vec<f64>, Vec<f64>)> {
        if self.rows < 2 {
            return Err(Error::InsufficientData(format!(
                "column_standardize needs at least 2 rows, got {}",
                self.rows
            )));
        }
        let means = self.column_means();
        let mut var = vec![0.0; self.cols];
        for r in 0..self.rows {
            for ((v, &x), &m) in var.iter_mut().zip(self.row(r)).zip(&means) {
                *v += (x - m) * (x - m);
            }
        }
        let denom = (self.rows - 1) as f64;
        let scales: Vec<f64> = var
            .iter()
            .map(|v| {
                let sd = (v / denom).sqrt();
                if sd < eps {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        let out = self.apply_standardization(&means, &scales)?;
        Ok((out, means, scales))
    }

    /// `(x - mean) / scale` per column with externally supplied statistics.
    pub fn apply_standardization(&self, means: &[f64], scales: &[f64]) -> Result<Matrix> {
        if means.len() != self.cols || scales.len() != self.cols {
            return Err(Error::shape(
                "apply_standardization",
                format!("{} columns", self.cols),
                format!("{} means / {} scales", means.len(), scales.len()),
            ));
        }
        let mut data = self.data.clone();
        for row in data.chunks_mut(self.cols.max(1)) {
            for ((x, m), s) in row.iter_mut().zip(means).zip(scales) {
                *x = (*x - m) / s;
            }
        }
        Matrix::new(self.rows, self.cols, data)
    }

    pub fn frobenius(&self) -> f64 {
        l2_norm(&self.data)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
