//! Row-major dense matrices and the handful of products the model needs.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::math;

/// Row-major dense real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DenseMatrix {
            n_rows,
            n_cols,
            values: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_vec(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(CoreError::ShapeMismatch(format!(
                "{}x{} matrix needs {} values, got {}",
                n_rows,
                n_cols,
                n_rows * n_cols,
                values.len()
            )));
        }
        Ok(DenseMatrix {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n_cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.n_cols;
        &mut self.values[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self * other`, cache-friendly i-k-j loop.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_cols != other.n_rows {
            return Err(CoreError::ShapeMismatch(format!(
                "matmul: {}x{} * {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.n_rows, other.n_cols);
        matmul_into(
            &self.values,
            self.n_rows,
            self.n_cols,
            &other.values,
            other.n_cols,
            &mut out.values,
            false,
        );
        Ok(out)
    }

    /// `self^T * other`.
    pub fn t_matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_rows != other.n_rows {
            return Err(CoreError::ShapeMismatch(format!(
                "t_matmul: {}x{} ^T * {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.n_cols, other.n_cols);
        // out[j, l] += self[i, j] * other[i, l]
        for i in 0..self.n_rows {
            let a_row = self.row(i);
            let b_row = &other.values[i * other.n_cols..(i + 1) * other.n_cols];
            for (j, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o = &mut out.values[j * other.n_cols..(j + 1) * other.n_cols];
                for (ov, &b) in o.iter_mut().zip(b_row) {
                    *ov += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * other^T`.
    pub fn matmul_bt(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_cols != other.n_cols {
            return Err(CoreError::ShapeMismatch(format!(
                "matmul_bt: {}x{} * ({}x{})^T",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.n_rows, other.n_rows);
        for i in 0..self.n_rows {
            let a_row = self.row(i);
            let o = &mut out.values[i * other.n_rows..(i + 1) * other.n_rows];
            for (j, ov) in o.iter_mut().enumerate() {
                let b_row = &other.values[j * other.n_cols..(j + 1) * other.n_cols];
                let mut acc = 0.0;
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                *ov = acc;
            }
        }
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) -> Result<()> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(CoreError::ShapeMismatch(format!(
                "add: {}x{} + {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    pub fn add_scaled_assign(&mut self, other: &DenseMatrix, alpha: f64) -> Result<()> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(CoreError::ShapeMismatch(format!(
                "add_scaled: {}x{} + {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.values {
            *v *= alpha;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Stack `top` above `bottom` (same column count).
    pub fn vstack(top: &DenseMatrix, bottom: &DenseMatrix) -> Result<DenseMatrix> {
        if top.n_cols != bottom.n_cols {
            return Err(CoreError::ShapeMismatch(format!(
                "vstack: {} vs {} columns",
                top.n_cols, bottom.n_cols
            )));
        }
        let mut values = Vec::with_capacity((top.n_rows + bottom.n_rows) * top.n_cols);
        values.extend_from_slice(&top.values);
        values.extend_from_slice(&bottom.values);
        Ok(DenseMatrix {
            n_rows: top.n_rows + bottom.n_rows,
            n_cols: top.n_cols,
            values,
        })
    }

    /// Place `left` beside `right` (same row count).
    pub fn hstack(left: &DenseMatrix, right: &DenseMatrix) -> Result<DenseMatrix> {
        if left.n_rows != right.n_rows {
            return Err(CoreError::ShapeMismatch(format!(
                "hstack: {} vs {} rows",
                left.n_rows, right.n_rows
            )));
        }
        let n_cols = left.n_cols + right.n_cols;
        let mut values = Vec::with_capacity(left.n_rows * n_cols);
        for i in 0..left.n_rows {
            values.extend_from_slice(left.row(i));
            values.extend_from_slice(right.row(i));
        }
        Ok(DenseMatrix {
            n_rows: left.n_rows,
            n_cols,
            values,
        })
    }

    /// Inverse of `hstack`: split columns at `at`.
    pub fn hsplit(&self, at: usize) -> (DenseMatrix, DenseMatrix) {
        assert!(at <= self.n_cols);
        let mut left = DenseMatrix::zeros(self.n_rows, at);
        let mut right = DenseMatrix::zeros(self.n_rows, self.n_cols - at);
        for i in 0..self.n_rows {
            let row = self.row(i);
            left.row_mut(i).copy_from_slice(&row[..at]);
            right.row_mut(i).copy_from_slice(&row[at..]);
        }
        (left, right)
    }

    /// Copy of rows `[start, end)`.
    pub fn row_slice(&self, start: usize, end: usize) -> DenseMatrix {
        assert!(start <= end && end <= self.n_rows);
        DenseMatrix {
            n_rows: end - start,
            n_cols: self.n_cols,
            values: self.values[start * self.n_cols..end * self.n_cols].to_vec(),
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        math::sqrt(self.row(i).iter().map(|v| v * v).sum())
    }
}

/// `out (+)= a * b` with `a` of shape `m x k` and `b` of shape `k x n`.
pub(crate) fn matmul_into(
    a: &[f64],
    m: usize,
    k: usize,
    b: &[f64],
    n: usize,
    out: &mut [f64],
    accumulate: bool,
) {
    if !accumulate {
        out.fill(0.0);
    }
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let o = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (ov, &bv) in o.iter_mut().zip(b_row) {
                *ov += av * bv;
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
