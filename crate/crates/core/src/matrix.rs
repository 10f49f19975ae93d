//! Dense row-major matrices and the handful of kernels the solvers need.
//!
//! Products come in three flavours so that the multiplicative updates never
//! materialize a transpose: `A B`, `Aᵀ B` and `A Bᵀ`. All reductions run in a
//! fixed order, so results are bit-reproducible for identical inputs.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 1.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DataLength {
                rows,
                cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row slices; all rows must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DataLength {
                    rows: rows.len(),
                    cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Builds a matrix by evaluating `f(row, col)` at every entry.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn col(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |i| self.data[i * self.cols + col])
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|x| c * x)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&x| x >= 0.0)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Fails with [`Error::NegativeEntry`] naming the first negative cell.
    pub fn check_nonnegative(&self) -> Result<()> {
        match self.data.iter().position(|&x| x < 0.0 || x.is_nan()) {
            None => Ok(()),
            Some(i) => Err(Error::NegativeEntry {
                row: i / self.cols,
                col: i % self.cols,
                value: self.data[i],
            }),
        }
    }

    /// Sum of |x| over column `k`.
    pub fn col_l1(&self, k: usize) -> f64 {
        self.col(k).map(f64::abs).sum()
    }

    /// Sum of x² over column `k`.
    pub fn col_sq(&self, k: usize) -> f64 {
        self.col(k).map(|x| x * x).sum()
    }

    pub fn row_l1(&self, k: usize) -> f64 {
        self.row(k).iter().map(|x| x.abs()).sum()
    }

    pub fn row_sq(&self, k: usize) -> f64 {
        self.row(k).iter().map(|x| x * x).sum()
    }

    pub(crate) fn ensure_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }
}

/// Binary indicator matrix: `true` marks an observed entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskMatrix {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl MaskMatrix {
    pub fn all_observed(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![true; rows * cols],
        }
    }

    pub fn none_observed(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![false; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DataLength {
                rows,
                cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Converts a 0/1 matrix; any other value is a domain error.
    pub fn from_dense(m: &DenseMatrix) -> Result<Self> {
        let mut data = Vec::with_capacity(m.len());
        for (i, &x) in m.as_slice().iter().enumerate() {
            if x == 1.0 {
                data.push(true);
            } else if x == 0.0 {
                data.push(false);
            } else {
                return Err(Error::Domain(format!(
                    "mask entry at row {}, column {} is {x}, expected 0 or 1",
                    i / m.cols(),
                    i % m.cols()
                )));
            }
        }
        Ok(Self {
            rows: m.rows(),
            cols: m.cols(),
            data,
        })
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.data[row * self.cols + col]
    }

    pub fn observed_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn missing_count(&self) -> usize {
        self.data.len() - self.observed_count()
    }

    /// Swaps observed and missing entries.
    pub fn complement(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&b| !b).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![false; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub(crate) fn ensure_shape(&self, shape: (usize, usize), op: &'static str) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::ShapeMismatch {
                op,
                left: shape,
                right: self.shape(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseOp {
    Mul,
    Div,
    Add,
    Sub,
}

/// `A B`.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = DenseMatrix::zeros(a.rows, b.cols);
    matmul_into(a, b, &mut out);
    Ok(out)
}

/// `Aᵀ B`.
pub fn matmul_tn(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows != b.rows {
        return Err(Error::ShapeMismatch {
            op: "matmul_tn",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = DenseMatrix::zeros(a.cols, b.cols);
    matmul_tn_into(a, b, &mut out);
    Ok(out)
}

/// `A Bᵀ`.
pub fn matmul_nt(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.cols {
        return Err(Error::ShapeMismatch {
            op: "matmul_nt",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = DenseMatrix::zeros(a.rows, b.rows);
    matmul_nt_into(a, b, &mut out);
    Ok(out)
}

// Unchecked kernels. Callers guarantee shapes; `out` is overwritten.

pub(crate) fn matmul_into(a: &DenseMatrix, b: &DenseMatrix, out: &mut DenseMatrix) {
    debug_assert_eq!(a.cols, b.rows);
    debug_assert_eq!(out.shape(), (a.rows, b.cols));
    let n = b.cols;
    for i in 0..a.rows {
        let out_row = &mut out.data[i * n..(i + 1) * n];
        out_row.fill(0.0);
        for (k, &aik) in a.row(i).iter().enumerate() {
            axpy(aik, &b.data[k * n..(k + 1) * n], out_row);
        }
    }
}

pub(crate) fn matmul_tn_into(a: &DenseMatrix, b: &DenseMatrix, out: &mut DenseMatrix) {
    debug_assert_eq!(a.rows, b.rows);
    debug_assert_eq!(out.shape(), (a.cols, b.cols));
    let n = b.cols;
    out.data.fill(0.0);
    for f in 0..a.rows {
        let b_row = &b.data[f * n..(f + 1) * n];
        for (k, &afk) in a.row(f).iter().enumerate() {
            axpy(afk, b_row, &mut out.data[k * n..(k + 1) * n]);
        }
    }
}

pub(crate) fn matmul_nt_into(a: &DenseMatrix, b: &DenseMatrix, out: &mut DenseMatrix) {
    debug_assert_eq!(a.cols, b.cols);
    debug_assert_eq!(out.shape(), (a.rows, b.rows));
    let k = b.rows;
    for i in 0..a.rows {
        let a_row = a.row(i);
        for j in 0..k {
            out.data[i * k + j] = dot(a_row, b.row(j));
        }
    }
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Dot product with four interleaved partial sums, combined in a fixed order.
#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = x.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += x[i] * y[i];
        acc[1] += x[i + 1] * y[i + 1];
        acc[2] += x[i + 2] * y[i + 2];
        acc[3] += x[i + 3] * y[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..x.len() {
        tail += x[i] * y[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn elementwise(a: &DenseMatrix, b: &DenseMatrix, op: ElementwiseOp) -> Result<DenseMatrix> {
    a.ensure_same_shape(b, "elementwise")?;
    let f: fn(f64, f64) -> f64 = match op {
        ElementwiseOp::Mul => |x, y| x * y,
        ElementwiseOp::Div => |x, y| x / y,
        ElementwiseOp::Add => |x, y| x + y,
        ElementwiseOp::Sub => |x, y| x - y,
    };
    let mut data = Vec::with_capacity(a.len());
    for (i, (&x, &y)) in a.data.iter().zip(&b.data).enumerate() {
        let z = f(x, y);
        if !z.is_finite() {
            return Err(Error::NonFinite(format!(
                "elementwise {op:?} at row {}, column {} ({x} and {y})",
                i / a.cols,
                i % a.cols
            )));
        }
        data.push(z);
    }
    Ok(DenseMatrix {
        rows: a.rows,
        cols: a.cols,
        data,
    })
}

/// Entrywise `a^exponent`. An exponent of exactly 1 returns a clone.
pub fn pow_elementwise(a: &DenseMatrix, exponent: f64) -> Result<DenseMatrix> {
    if exponent == 1.0 {
        return Ok(a.clone());
    }
    let mut data = Vec::with_capacity(a.len());
    for (i, &x) in a.data.iter().enumerate() {
        if x < 0.0 {
            return Err(Error::Domain(format!(
                "negative base {x} at row {}, column {}",
                i / a.cols,
                i % a.cols
            )));
        }
        let z = x.powf(exponent);
        if !z.is_finite() {
            return Err(Error::NonFinite(format!(
                "{x}^{exponent} at row {}, column {}",
                i / a.cols,
                i % a.cols
            )));
        }
        data.push(z);
    }
    Ok(DenseMatrix {
        rows: a.rows,
        cols: a.cols,
        data,
    })
}

pub fn frobenius_norm(a: &DenseMatrix) -> f64 {
    a.data.iter().map(|x| x * x).sum::<f64>().sqrt()
}
