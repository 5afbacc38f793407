//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the code paths it is used to check.

#![allow(dead_code)]

use mtensor_core::{seeded_rng, DenseTensor, Matrix, MultipleFactors};
use rand::Rng;

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> DenseTensor {
    DenseTensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

pub fn random_factors(ranks: &[usize], dims: &[usize], seed: u64) -> MultipleFactors {
    MultipleFactors::random(ranks, dims, 1.0, &mut seeded_rng(seed)).unwrap()
}

/// All multi-indices of `shape`, first index fastest.
pub fn indices(shape: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = shape.iter().product();
    let mut out = Vec::with_capacity(total);
    for mut l in 0..total {
        let mut idx = Vec::with_capacity(shape.len());
        for &s in shape {
            idx.push(l % s);
            l /= s;
        }
        out.push(idx);
    }
    out
}

/// Linear offset, first index fastest.
pub fn offset(shape: &[usize], idx: &[usize]) -> usize {
    let mut off = 0;
    let mut stride = 1;
    for (&i, &s) in idx.iter().zip(shape) {
        off += i * stride;
        stride *= s;
    }
    off
}

fn at(t: &DenseTensor, idx: &[usize]) -> f64 {
    t.data()[offset(t.shape(), idx)]
}

/// Nested-sum definition of the Multiple product.
pub fn naive_product(f: &MultipleFactors) -> DenseTensor {
    let n_modes = f.order();
    let dims = f.long_dims().to_vec();
    let rank_idx = indices(f.ranks());
    let mut out = vec![0.0; dims.iter().product()];
    for i in indices(&dims) {
        let mut sum = 0.0;
        for p in &rank_idx {
            let mut prod = 1.0;
            for n in 0..n_modes {
                let mut q = p.clone();
                q[n] = i[n];
                prod *= at(f.factor(n), &q);
            }
            sum += prod;
        }
        out[offset(&dims, &i)] = sum;
    }
    DenseTensor::new(&dims, out).unwrap()
}

/// `X[i] = sum_q prod_n a_n[i_n, q]`.
pub fn cp_direct(cp: &[Matrix]) -> DenseTensor {
    let dims: Vec<usize> = cp.iter().map(|m| m.rows()).collect();
    let r = cp[0].cols();
    let mut out = vec![0.0; dims.iter().product()];
    for i in indices(&dims) {
        let v: f64 = (0..r)
            .map(|q| cp.iter().zip(&i).map(|(a, &ii)| a[(ii, q)]).product::<f64>())
            .sum();
        out[offset(&dims, &i)] = v;
    }
    DenseTensor::new(&dims, out).unwrap()
}

/// Mode-`n` unfolding straight from the definition: row `i_n`, column the
/// remaining indices first-fastest.
pub fn naive_unfold(x: &DenseTensor, n: usize) -> Matrix {
    let shape = x.shape();
    let rest: Vec<usize> = (0..shape.len()).filter(|&k| k != n).map(|k| shape[k]).collect();
    let cols: usize = rest.iter().product();
    let mut m = Matrix::zeros(shape[n], cols);
    for idx in indices(shape) {
        let other: Vec<usize> = (0..shape.len()).filter(|&k| k != n).map(|k| idx[k]).collect();
        m[(idx[n], offset(&rest, &other))] = at(x, &idx);
    }
    m
}

/// Central difference of `f` along coordinate `k` of `x`.
pub fn central_diff(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], k: usize, h: f64) -> f64 {
    let mut y = x.to_vec();
    y[k] = x[k] + h;
    let up = f(&y);
    y[k] = x[k] - h;
    let down = f(&y);
    (up - down) / (2.0 * h)
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Brute-force minimizer of
/// `gamma|e| + [observed](a + e - m)^2 + eta/2 (e - e_prev)^2` over a grid on
/// `[-3, 3]` with step `1e-5`.
pub fn e_step_grid_search(a: f64, e_prev: f64, m: f64, observed: bool, gamma: f64, eta: f64) -> f64 {
    let obj = |e: f64| {
        let fit = if observed { (a + e - m) * (a + e - m) } else { 0.0 };
        gamma * e.abs() + fit + 0.5 * eta * (e - e_prev) * (e - e_prev)
    };
    let steps = 600_000;
    let mut best = (f64::INFINITY, 0.0);
    for s in 0..=steps {
        let e = -3.0 + 6.0 * s as f64 / steps as f64;
        let v = obj(e);
        if v < best.0 {
            best = (v, e);
        }
    }
    best.1
}

/// Distance from a planar point to the circle of radius `r` about the origin.
pub fn circle_distance(p: &[f64], r: f64) -> f64 {
    ((p[0] * p[0] + p[1] * p[1]).sqrt() - r).abs()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `Y = X x_n U` from the definition `Y[.., j, ..] = sum_i U[j, i] X[.., i, ..]`.
pub fn naive_mode_product(x: &DenseTensor, u: &Matrix, n: usize) -> DenseTensor {
    let mut shape = x.shape().to_vec();
    shape[n] = u.rows();
    let mut out = vec![0.0; shape.iter().product()];
    for idx in indices(&shape) {
        let mut src = idx.clone();
        let mut v = 0.0;
        for i in 0..u.cols() {
            src[n] = i;
            v += u[(idx[n], i)] * at(x, &src);
        }
        out[offset(&shape, &idx)] = v;
    }
    DenseTensor::new(&shape, out).unwrap()
}

/// `prod_n sum |A_n[p]|` over the entries of factor `n` whose mode-`n` index
/// is `idx[n]`.
pub fn naive_entry_bound(f: &MultipleFactors, idx: &[usize]) -> f64 {
    (0..f.order())
        .map(|n| {
            let a = f.factor(n);
            indices(a.shape())
                .iter()
                .filter(|p| p[n] == idx[n])
                .map(|p| at(a, p).abs())
                .sum::<f64>()
        })
        .product()
}
