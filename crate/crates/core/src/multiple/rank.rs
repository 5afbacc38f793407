use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::math;

/// Heuristic range for the generalized triple rank of a tensor shape.
///
/// The two bounds are independent heuristics; `r_min <= r_max` is not
/// guaranteed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankBounds {
    pub r_min: f64,
    pub r_max: f64,
    /// `round(r_max)`, at least 1.
    pub recommended: usize,
}

/// Second largest extent (counting repeats), the uniform rank that always
/// admits an exact decomposition.
pub fn submax(shape: &[usize]) -> usize {
    let mut s: Vec<usize> = shape.to_vec();
    s.sort_unstable_by(|a, b| b.cmp(a));
    s.get(1).or(s.first()).copied().unwrap_or(0)
}

/// `r_min = max_n I_n^(1/(N-1)) / 3` and
/// `r_max = 2/3 * (prod I_n / sum I_n)^(1/(N-1))`.
pub fn rank_bounds(shape: &[usize]) -> Result<RankBounds> {
    if shape.len() < 2 || shape.iter().any(|&s| s == 0) {
        bail!(InvalidArgument, "rank bounds need order >= 2 and positive extents, got {:?}", shape);
    }
    let e = 1.0 / (shape.len() - 1) as f64;
    let r_min = shape
        .iter()
        .map(|&s| math::powf(s as f64, e))
        .fold(0.0, f64::max)
        / 3.0;
    let prod: f64 = shape.iter().map(|&s| s as f64).product();
    let sum: f64 = shape.iter().map(|&s| s as f64).sum();
    let r_max = 2.0 / 3.0 * math::powf(prod / sum, e);
    let recommended = (math::round(r_max) as usize).max(1);
    Ok(RankBounds {
        r_min,
        r_max,
        recommended,
    })
}

/// Upper bound `round(p^(1/3))` on the rank for a cloud of `p` points.
pub fn pcu_rank_bound(num_points: usize) -> usize {
    math::round(libm::cbrt(num_points as f64)) as usize
}

/// `numel(X) / sum_n numel(A_n)`.
pub fn compression_ratio(shape: &[usize], ranks: &[usize]) -> Result<f64> {
    if shape.len() != ranks.len() {
        bail!(ShapeMismatch, "{} ranks for order {}", ranks.len(), shape.len());
    }
    let numel: f64 = shape.iter().map(|&s| s as f64).product();
    let params: f64 = (0..shape.len())
        .map(|n| {
            ranks
                .iter()
                .enumerate()
                .map(|(k, &r)| if k == n { shape[n] as f64 } else { r as f64 })
                .product::<f64>()
        })
        .sum();
    Ok(numel / params)
}
