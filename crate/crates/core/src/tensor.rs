//! Dense N-dimensional tensors and row-major matrices.
//!
//! A tensor of shape `(I_1, ..., I_N)` stores entry `(i_1, ..., i_N)` at linear
//! offset `i_1 + I_1 * (i_2 + I_2 * (i_3 + ... ))`, i.e. the first index varies
//! fastest. The mode-n unfolding puts `i_n` on the rows; its column index is the
//! same first-fastest linearization applied to the remaining indices in
//! increasing mode order. [`DenseTensor::unfold`] and [`DenseTensor::fold`] are
//! exact inverses.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{bail, Error, Result};
use crate::math;

/// PSNR reported for an exact match.
pub const PSNR_CAP_DB: f64 = 200.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        bail!(ShapeMismatch, "tensor shape must have at least one mode");
    }
    if shape.iter().any(|&s| s == 0) {
        bail!(ShapeMismatch, "extents must be positive, got {:?}", shape);
    }
    Ok(shape.iter().product())
}

impl DenseTensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let numel = check_shape(shape)?;
        if numel != data.len() {
            bail!(
                ShapeMismatch,
                "shape {:?} needs {} values, got {}",
                shape,
                numel,
                data.len()
            );
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Panics if `shape` is empty or has a zero extent.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    /// Panics if `shape` is empty or has a zero extent.
    pub fn filled(shape: &[usize], value: f64) -> Self {
        let numel = check_shape(shape).expect("invalid tensor shape");
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    /// Builds a tensor by evaluating `f` at every multi-index, in storage order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        let mut idx = vec![0usize; shape.len()];
        for v in t.data.iter_mut() {
            *v = f(&idx);
            advance(&mut idx, shape);
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Linear offset of a multi-index, or `None` when out of range.
    pub fn offset(&self, idx: &[usize]) -> Option<usize> {
        if idx.len() != self.shape.len() {
            return None;
        }
        let mut off = 0;
        let mut stride = 1;
        for (&i, &s) in idx.iter().zip(&self.shape) {
            if i >= s {
                return None;
            }
            off += i * stride;
            stride *= s;
        }
        Some(off)
    }

    pub fn get(&self, idx: &[usize]) -> Option<f64> {
        self.offset(idx).map(|o| self.data[o])
    }

    /// Multi-index of a linear offset.
    pub fn unravel(&self, mut offset: usize) -> Vec<usize> {
        self.shape
            .iter()
            .map(|&s| {
                let i = offset % s;
                offset /= s;
                i
            })
            .collect()
    }

    fn check_mode(&self, n: usize) -> Result<()> {
        if n >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode: n,
                order: self.order(),
            });
        }
        Ok(())
    }

    /// Mode-`n` unfolding: an `I_n x (numel / I_n)` matrix.
    pub fn unfold(&self, n: usize) -> Result<Matrix> {
        self.check_mode(n)?;
        let rows = self.shape[n];
        let cols = self.numel() / rows;
        let inner: usize = self.shape[..n].iter().product();
        let mut out = vec![0.0; self.numel()];
        // Storage is [inner block] x I_n x [outer block].
        for (l, &v) in self.data.iter().enumerate() {
            let lower = l % inner;
            let rest = l / inner;
            let i = rest % rows;
            let upper = rest / rows;
            out[i * cols + lower + inner * upper] = v;
        }
        Ok(Matrix {
            rows,
            cols,
            data: out,
        })
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn fold(m: &Matrix, n: usize, shape: &[usize]) -> Result<Self> {
        let numel = check_shape(shape)?;
        if n >= shape.len() {
            return Err(Error::ModeOutOfRange {
                mode: n,
                order: shape.len(),
            });
        }
        if m.rows != shape[n] || m.rows * m.cols != numel {
            bail!(
                ShapeMismatch,
                "cannot fold a {}x{} matrix along mode {} into {:?}",
                m.rows,
                m.cols,
                n,
                shape
            );
        }
        let inner: usize = shape[..n].iter().product();
        let rows = m.rows;
        let cols = m.cols;
        let mut data = vec![0.0; numel];
        for (l, v) in data.iter_mut().enumerate() {
            let lower = l % inner;
            let rest = l / inner;
            let i = rest % rows;
            let upper = rest / rows;
            *v = m.data[i * cols + lower + inner * upper];
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// `self x_n u`: replaces extent `I_n` by `rows(u)`.
    pub fn mode_n_product(&self, u: &Matrix, n: usize) -> Result<Self> {
        self.check_mode(n)?;
        if u.cols != self.shape[n] {
            bail!(
                ShapeMismatch,
                "mode-{} product needs {} matrix columns, got {}",
                n,
                self.shape[n],
                u.cols
            );
        }
        let prod = u.matmul(&self.unfold(n)?)?;
        let mut shape = self.shape.clone();
        shape[n] = u.rows;
        Self::fold(&prod, n, &shape)
    }

    /// Permutes modes: mode `k` of the result is mode `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let n = self.order();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || core::mem::replace(&mut seen[p], true)) {
            bail!(InvalidArgument, "{:?} is not a permutation of 0..{}", perm, n);
        }
        let shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let mut src = vec![0usize; n];
        Ok(Self::from_fn(&shape, |idx| {
            for (k, &p) in perm.iter().enumerate() {
                src[p] = idx[k];
            }
            self[&src[..]]
        }))
    }

    pub fn fro_norm(&self) -> f64 {
        math::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise `sign(x) * max(|x| - tau, 0)`.
    pub fn soft_threshold(&self, tau: f64) -> Result<Self> {
        if !(tau >= 0.0) {
            bail!(InvalidArgument, "soft threshold needs tau >= 0, got {}", tau);
        }
        let data = self.data.iter().map(|&x| soft(x, tau)).collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            bail!(ShapeMismatch, "{:?} vs {:?}", self.shape, other.shape);
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Squared Frobenius distance.
    pub fn dist_sq(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }
}

impl Index<&[usize]> for DenseTensor {
    type Output = f64;

    fn index(&self, idx: &[usize]) -> &f64 {
        let o = self
            .offset(idx)
            .unwrap_or_else(|| panic!("index {:?} out of range for {:?}", idx, self.shape));
        &self.data[o]
    }
}

impl IndexMut<&[usize]> for DenseTensor {
    fn index_mut(&mut self, idx: &[usize]) -> &mut f64 {
        let o = self
            .offset(idx)
            .unwrap_or_else(|| panic!("index {:?} out of range for {:?}", idx, self.shape));
        &mut self.data[o]
    }
}

/// Scalar soft-thresholding. An infinite `tau` maps everything to zero.
#[inline]
pub fn soft(x: f64, tau: f64) -> f64 {
    let m = x.abs() - tau;
    if m > 0.0 {
        x.signum() * m
    } else {
        0.0
    }
}

/// Advances a first-fastest odometer; wraps to all zeros after the last index.
#[inline]
pub(crate) fn advance(idx: &mut [usize], shape: &[usize]) {
    for (i, &s) in idx.iter_mut().zip(shape) {
        *i += 1;
        if *i < s {
            return;
        }
        *i = 0;
    }
}

/// Peak signal-to-noise ratio in dB, capped at [`PSNR_CAP_DB`].
pub fn psnr(x: &DenseTensor, reference: &DenseTensor, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        bail!(InvalidArgument, "psnr peak must be positive, got {}", peak);
    }
    let mse = x.dist_sq(reference)? / x.numel() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * math::log10(peak * peak / mse)).min(PSNR_CAP_DB))
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            bail!(ShapeMismatch, "matrix dimensions must be positive");
        }
        if rows * cols != data.len() {
            bail!(
                ShapeMismatch,
                "{}x{} matrix needs {} values, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            );
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            bail!(ShapeMismatch, "ragged rows");
        }
        Self::new(rows.len(), cols, rows.concat())
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

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            bail!(
                ShapeMismatch,
                "cannot multiply {}x{} by {}x{}",
                self.rows,
                self.cols,
                other.rows,
                other.cols
            );
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * other^T`.
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            bail!(
                ShapeMismatch,
                "cannot multiply {}x{} by the transpose of {}x{}",
                self.rows,
                self.cols,
                other.rows,
                other.cols
            );
        }
        let mut out = Self::zeros(self.rows, other.rows);
        for r in 0..self.rows {
            let a = self.row(r);
            for c in 0..other.rows {
                out.data[r * other.rows + c] = dot(a, other.row(c));
            }
        }
        Ok(out)
    }

    /// `self^T * other`.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            bail!(
                ShapeMismatch,
                "cannot multiply the transpose of {}x{} by {}x{}",
                self.rows,
                self.cols,
                other.rows,
                other.cols
            );
        }
        let mut out = Self::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let b = other.row(k);
            for (r, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (o, &bv) in out_row.iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn fro_norm(&self) -> f64 {
        math::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    /// Entrywise l1 norm.
    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            bail!(ShapeMismatch, "matrix shapes differ");
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        assert!(r < self.rows && c < self.cols, "matrix index out of range");
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        assert!(r < self.rows && c < self.cols, "matrix index out of range");
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
