//! Small dense solvers needed by the least-squares updates and diagnostics.

use alloc::vec::Vec;

use crate::error::{bail, Error, Result};
use crate::math;
use crate::tensor::Matrix;

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        bail!(ShapeMismatch, "cholesky needs a square matrix");
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let d = math::sqrt(d);
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `X * A = B` for `X` with `A` symmetric positive definite.
///
/// Each row `x` of the result satisfies `A x = b` for the matching row of `B`.
pub fn solve_right_spd(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if b.cols() != n {
        bail!(
            ShapeMismatch,
            "right-hand side has {} columns, system has {}",
            b.cols(),
            n
        );
    }
    let l = cholesky(a)?;
    let mut x = b.clone();
    for r in 0..x.rows() {
        let row = x.row_mut(r);
        // L y = b
        for i in 0..n {
            let mut s = row[i];
            for k in 0..i {
                s -= l[(i, k)] * row[k];
            }
            row[i] = s / l[(i, i)];
        }
        // L^T x = y
        for i in (0..n).rev() {
            let mut s = row[i];
            for k in i + 1..n {
                s -= l[(k, i)] * row[k];
            }
            row[i] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// Numerical rank by Gaussian elimination with complete pivoting.
///
/// Pivots below `rel_tol * max|a|` count as zero.
pub fn numerical_rank(a: &Matrix, rel_tol: f64) -> usize {
    let (rows, cols) = (a.rows(), a.cols());
    let mut m: Vec<f64> = a.data().to_vec();
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let tol = rel_tol * scale;
    let mut rank = 0;
    let mut row_perm: Vec<usize> = (0..rows).collect();
    let mut col_perm: Vec<usize> = (0..cols).collect();
    while rank < rows.min(cols) {
        let (mut pr, mut pc, mut best) = (rank, rank, 0.0);
        for r in rank..rows {
            for c in rank..cols {
                let v = m[row_perm[r] * cols + col_perm[c]].abs();
                if v > best {
                    best = v;
                    pr = r;
                    pc = c;
                }
            }
        }
        if best <= tol {
            break;
        }
        row_perm.swap(rank, pr);
        col_perm.swap(rank, pc);
        let prow = row_perm[rank];
        let pivot = m[prow * cols + col_perm[rank]];
        for r in rank + 1..rows {
            let rr = row_perm[r];
            let f = m[rr * cols + col_perm[rank]] / pivot;
            if f == 0.0 {
                continue;
            }
            for c in rank..cols {
                let cc = col_perm[c];
                m[rr * cols + cc] -= f * m[prow * cols + cc];
            }
        }
        rank += 1;
    }
    rank
}
