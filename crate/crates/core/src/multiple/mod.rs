//! The Multiple decomposition.
//!
//! An order-`N` tensor `X` of shape `(I_1, ..., I_N)` is written as the Multiple
//! product of `N` factor tensors. Factor `n` has the long extent `I_n` in mode `n`
//! and the short extent `r_k` in every other mode `k`:
//!
//! ```text
//! X[i_1..i_N] = sum_{p_1..p_N} A_1[i_1,p_2,..,p_N] * A_2[p_1,i_2,p_3,..,p_N] * ... * A_N[p_1,..,p_{N-1},i_N]
//! ```
//!
//! Every rank index `p_k` is shared by all factors except `A_k`. The contraction
//! of all factors but one gives the environment matrix `E_n` with
//! `unfold(X, n) = unfold(A_n, n) * E_n^T`, which is what the fitting routines and
//! the neural variant in [`crate::imtd`] are built on.

mod als;
mod construct;
pub(crate) mod product;
mod rank;

use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{bail, Error, Result};
use crate::tensor::{DenseTensor, Matrix};
use crate::Rng;

pub use als::{als_fit, AlsOptions, AlsOutcome};
pub use construct::{
    cp_to_multiple, gtri_construct, pad_ranks, slice_ranks, tucker_commutation_check,
    tucker_compose, GtriDecomposition,
};
pub use product::{
    contract_slices, contract_slices_grad, contraction_env, distribute_check, entry,
    entry_bound, multiple_product, RankTables,
};
pub use rank::{compression_ratio, pcu_rank_bound, rank_bounds, submax, RankBounds};

/// One explicit Multiple decomposition: `N >= 3` factor tensors with their
/// rank vector and long extents.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipleFactors {
    ranks: Vec<usize>,
    long_dims: Vec<usize>,
    factors: Vec<DenseTensor>,
}

/// Shape of factor `n`: the rank vector with entry `n` replaced by `I_n`.
pub fn factor_shape(ranks: &[usize], long_dims: &[usize], n: usize) -> Vec<usize> {
    let mut s = ranks.to_vec();
    s[n] = long_dims[n];
    s
}

fn check_dims(ranks: &[usize], long_dims: &[usize]) -> Result<()> {
    if ranks.len() != long_dims.len() {
        bail!(
            ShapeMismatch,
            "{} ranks for an order-{} tensor",
            ranks.len(),
            long_dims.len()
        );
    }
    if ranks.len() < 3 {
        bail!(
            InvalidArgument,
            "the Multiple decomposition needs order >= 3, got {}",
            ranks.len()
        );
    }
    if ranks.iter().chain(long_dims).any(|&v| v == 0) {
        bail!(InvalidArgument, "ranks and extents must be positive");
    }
    Ok(())
}

impl MultipleFactors {
    /// Validates and wraps a list of factors; ranks and long extents are read
    /// off the factor shapes.
    pub fn new(factors: Vec<DenseTensor>) -> Result<Self> {
        let n_modes = factors.len();
        if n_modes < 3 {
            bail!(
                InvalidArgument,
                "the Multiple decomposition needs order >= 3, got {}",
                n_modes
            );
        }
        let mut ranks = Vec::with_capacity(n_modes);
        let mut long_dims = Vec::with_capacity(n_modes);
        for (n, f) in factors.iter().enumerate() {
            if f.order() != n_modes {
                bail!(
                    ShapeMismatch,
                    "factor {} has order {}, expected {}",
                    n,
                    f.order(),
                    n_modes
                );
            }
            long_dims.push(f.shape()[n]);
            // r_k is read from any factor other than k.
            let other = if n == 0 { 1 } else { 0 };
            ranks.push(factors[other].shape()[n]);
        }
        for (n, f) in factors.iter().enumerate() {
            let want = factor_shape(&ranks, &long_dims, n);
            if f.shape() != want.as_slice() {
                bail!(
                    ShapeMismatch,
                    "factor {} has shape {:?}, expected {:?}",
                    n,
                    f.shape(),
                    want
                );
            }
        }
        Ok(Self {
            ranks,
            long_dims,
            factors,
        })
    }

    pub fn zeros(ranks: &[usize], long_dims: &[usize]) -> Result<Self> {
        check_dims(ranks, long_dims)?;
        let factors = (0..ranks.len())
            .map(|n| DenseTensor::zeros(&factor_shape(ranks, long_dims, n)))
            .collect();
        Ok(Self {
            ranks: ranks.to_vec(),
            long_dims: long_dims.to_vec(),
            factors,
        })
    }

    /// Factors with i.i.d. entries uniform in `[-scale, scale]`.
    pub fn random(ranks: &[usize], long_dims: &[usize], scale: f64, rng: &mut Rng) -> Result<Self> {
        let mut f = Self::zeros(ranks, long_dims)?;
        for t in &mut f.factors {
            for v in t.data_mut() {
                *v = rng.gen_range(-scale..=scale);
            }
        }
        Ok(f)
    }

    pub fn order(&self) -> usize {
        self.ranks.len()
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn long_dims(&self) -> &[usize] {
        &self.long_dims
    }

    pub fn factors(&self) -> &[DenseTensor] {
        &self.factors
    }

    pub fn factor(&self, n: usize) -> &DenseTensor {
        &self.factors[n]
    }

    pub fn into_factors(self) -> Vec<DenseTensor> {
        self.factors
    }

    /// Replaces factor `n`; the new factor must have the same shape.
    pub fn set_factor(&mut self, n: usize, t: DenseTensor) -> Result<()> {
        self.check_mode(n)?;
        if t.shape() != self.factors[n].shape() {
            bail!(
                ShapeMismatch,
                "factor {} must keep shape {:?}, got {:?}",
                n,
                self.factors[n].shape(),
                t.shape()
            );
        }
        self.factors[n] = t;
        Ok(())
    }

    /// Product of the short extents of factor `n`, i.e. `prod_{k != n} r_k`.
    pub fn slice_len(&self, n: usize) -> usize {
        slice_len(&self.ranks, n)
    }

    pub fn param_count(&self) -> usize {
        self.factors.iter().map(DenseTensor::numel).sum()
    }

    pub(crate) fn check_mode(&self, n: usize) -> Result<()> {
        if n >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode: n,
                order: self.order(),
            });
        }
        Ok(())
    }
}

pub(crate) fn slice_len(ranks: &[usize], n: usize) -> usize {
    ranks
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != n)
        .map(|(_, &r)| r)
        .product()
}

/// Environment matrix of mode `n`: rows run over the long indices of every
/// other mode, columns over the rank indices of every other mode (both
/// first-fastest), so that `unfold(X, n) = unfold(A_n, n) * matrix^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionEnv {
    pub mode: usize,
    pub matrix: Matrix,
}
