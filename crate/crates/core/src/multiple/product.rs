use alloc::vec;
use alloc::vec::Vec;

use super::{slice_len, ContractionEnv, MultipleFactors};
use crate::error::{bail, Result};
use crate::tensor::{advance, DenseTensor, Matrix};

/// Lookup tables from a full rank multi-index `(p_1..p_N)` (linearized
/// first-fastest) to the position of `p_{-n}` inside a mode-`n` factor slice.
#[derive(Debug, Clone)]
pub struct RankTables {
    total: usize,
    index: Vec<Vec<usize>>,
}

impl RankTables {
    pub fn new(ranks: &[usize]) -> Self {
        let n_modes = ranks.len();
        let total: usize = ranks.iter().product();
        let mut index = vec![Vec::with_capacity(total); n_modes];
        let mut p = vec![0usize; n_modes];
        for _ in 0..total {
            for (n, table) in index.iter_mut().enumerate() {
                let mut lin = 0;
                let mut stride = 1;
                for (k, (&pk, &rk)) in p.iter().zip(ranks).enumerate() {
                    if k != n {
                        lin += pk * stride;
                        stride *= rk;
                    }
                }
                table.push(lin);
            }
            advance(&mut p, ranks);
        }
        Self { total, index }
    }

    /// Number of full rank multi-indices, `prod_k r_k`.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn order(&self) -> usize {
        self.index.len()
    }

    pub fn table(&self, n: usize) -> &[usize] {
        &self.index[n]
    }
}

/// Full contraction of one slice per mode: `sum_p prod_n s_n[p_{-n}]`.
///
/// This is the Multiple product of a `1 x ... x 1` tensor.
pub fn contract_slices(tables: &RankTables, slices: &[&[f64]]) -> f64 {
    let mut acc = 0.0;
    for p in 0..tables.total {
        let mut prod = 1.0;
        for (s, t) in slices.iter().zip(&tables.index) {
            prod *= s[t[p]];
            if prod == 0.0 {
                break;
            }
        }
        acc += prod;
    }
    acc
}

/// Like [`contract_slices`], additionally accumulating `weight * d f / d s_n`
/// into `grads[n]` for every mode.
pub fn contract_slices_grad(
    tables: &RankTables,
    slices: &[&[f64]],
    weight: f64,
    grads: &mut [&mut [f64]],
) -> f64 {
    let n_modes = slices.len();
    let mut vals = vec![0.0; n_modes];
    let mut prefix = vec![1.0; n_modes + 1];
    let mut acc = 0.0;
    for p in 0..tables.total {
        for n in 0..n_modes {
            vals[n] = slices[n][tables.index[n][p]];
            prefix[n + 1] = prefix[n] * vals[n];
        }
        acc += prefix[n_modes];
        if weight == 0.0 {
            continue;
        }
        let mut suffix = weight;
        for n in (0..n_modes).rev() {
            grads[n][tables.index[n][p]] += prefix[n] * suffix;
            suffix *= vals[n];
        }
    }
    acc
}

/// Environment matrix of mode `n` from the mode-wise unfoldings
/// `unfold(A_j, j)` of all factors.
pub(crate) fn env_from_unfoldings(
    unfoldings: &[Matrix],
    long_dims: &[usize],
    tables: &RankTables,
    n: usize,
) -> Matrix {
    let n_modes = long_dims.len();
    let other_dims: Vec<usize> = (0..n_modes)
        .filter(|&k| k != n)
        .map(|k| long_dims[k])
        .collect();
    let rows: usize = other_dims.iter().product();
    let cols = unfoldings[n].cols();
    let mut env = Matrix::zeros(rows, cols);
    let others: Vec<usize> = (0..n_modes).filter(|&k| k != n).collect();
    let mut idx = vec![0usize; others.len()];
    let col_table = &tables.index[n];
    let mut slices: Vec<&[f64]> = Vec::with_capacity(others.len());
    for row in 0..rows {
        slices.clear();
        slices.extend(others.iter().zip(&idx).map(|(&j, &i)| unfoldings[j].row(i)));
        let out = env.row_mut(row);
        for p in 0..tables.total {
            let mut prod = 1.0;
            for (s, &j) in slices.iter().zip(&others) {
                prod *= s[tables.index[j][p]];
                if prod == 0.0 {
                    break;
                }
            }
            out[col_table[p]] += prod;
        }
        advance(&mut idx, &other_dims);
    }
    env
}

/// Multiple product from the factor unfoldings, contracted along the mode
/// with the largest extent.
pub(crate) fn product_from_unfoldings(
    unfoldings: &[Matrix],
    long_dims: &[usize],
    tables: &RankTables,
) -> DenseTensor {
    let m = (0..long_dims.len())
        .max_by_key(|&k| (long_dims[k], usize::MAX - k))
        .unwrap_or(0);
    let env = env_from_unfoldings(unfoldings, long_dims, tables, m);
    let xm = unfoldings[m]
        .matmul_t(&env)
        .expect("environment columns match the factor slice length");
    DenseTensor::fold(&xm, m, long_dims).expect("product shape matches the long extents")
}

pub(crate) fn unfoldings(f: &MultipleFactors) -> Vec<Matrix> {
    f.factors()
        .iter()
        .enumerate()
        .map(|(n, a)| a.unfold(n).expect("factor has order N"))
        .collect()
}

/// The Multiple product `[A_1 A_2 ... A_N]`, of shape `(I_1, ..., I_N)`.
pub fn multiple_product(f: &MultipleFactors) -> DenseTensor {
    let tables = RankTables::new(f.ranks());
    product_from_unfoldings(&unfoldings(f), f.long_dims(), &tables)
}

/// Environment `E_n` with `unfold(X, n) = unfold(A_n, n) * E_n^T`.
pub fn contraction_env(f: &MultipleFactors, n: usize) -> Result<ContractionEnv> {
    f.check_mode(n)?;
    let tables = RankTables::new(f.ranks());
    let matrix = env_from_unfoldings(&unfoldings(f), f.long_dims(), &tables, n);
    debug_assert_eq!(matrix.cols(), slice_len(f.ranks(), n));
    Ok(ContractionEnv { mode: n, matrix })
}

/// Single entry of the Multiple product.
pub fn entry(f: &MultipleFactors, idx: &[usize]) -> Result<f64> {
    check_index(f, idx)?;
    let tables = RankTables::new(f.ranks());
    let unf = unfoldings(f);
    let slices: Vec<&[f64]> = unf.iter().zip(idx).map(|(u, &i)| u.row(i)).collect();
    Ok(contract_slices(&tables, &slices))
}

fn check_index(f: &MultipleFactors, idx: &[usize]) -> Result<()> {
    if idx.len() != f.order() || idx.iter().zip(f.long_dims()).any(|(&i, &d)| i >= d) {
        bail!(
            IndexOutOfRange,
            "{:?} for long extents {:?}",
            idx,
            f.long_dims()
        );
    }
    Ok(())
}

/// Product of the l1 norms of the factor slices selected by `idx`; an upper
/// bound on `|X[idx]|`.
pub fn entry_bound(f: &MultipleFactors, idx: &[usize]) -> Result<f64> {
    check_index(f, idx)?;
    let mut bound = 1.0;
    for (n, (a, &i)) in f.factors().iter().zip(idx).enumerate() {
        let u = a.unfold(n)?;
        bound *= u.row(i).iter().map(|v| v.abs()).sum::<f64>();
    }
    Ok(bound)
}

/// Max abs deviation between `[.. (A_n - Â_n) ..]` and
/// `[.. A_n ..] - [.. Â_n ..]` for decompositions differing only in factor `n`.
pub fn distribute_check(f: &MultipleFactors, f_hat: &MultipleFactors, n: usize) -> Result<f64> {
    f.check_mode(n)?;
    if f.ranks() != f_hat.ranks() || f.long_dims() != f_hat.long_dims() {
        bail!(ShapeMismatch, "decompositions have different shapes");
    }
    if (0..f.order()).any(|k| k != n && f.factor(k) != f_hat.factor(k)) {
        bail!(
            InvalidArgument,
            "decompositions must differ only in factor {}",
            n
        );
    }
    let mut diff = f.clone();
    diff.set_factor(n, f.factor(n).sub(f_hat.factor(n))?)?;
    let lhs = multiple_product(&diff);
    let rhs = multiple_product(f).sub(&multiple_product(f_hat))?;
    lhs.max_abs_diff(&rhs)
}
