use alloc::vec;
use alloc::vec::Vec;

use super::{factor_shape, multiple_product, submax, MultipleFactors};
use crate::error::{bail, Result};
use crate::math;
use crate::tensor::{DenseTensor, Matrix};

/// Result of [`gtri_construct`].
#[derive(Debug, Clone, PartialEq)]
pub enum GtriDecomposition {
    /// The zero tensor, whose generalized triple rank is 0; there are no factors.
    Zero { shape: Vec<usize> },
    /// Uniform-rank factors reproducing the input exactly.
    Factors(MultipleFactors),
}

impl GtriDecomposition {
    pub fn rank(&self) -> usize {
        match self {
            Self::Zero { .. } => 0,
            Self::Factors(f) => f.ranks()[0],
        }
    }

    pub fn factors(&self) -> Option<&MultipleFactors> {
        match self {
            Self::Zero { .. } => None,
            Self::Factors(f) => Some(f),
        }
    }
}

/// Exact uniform-rank decomposition with `r = submax(shape)`.
///
/// The mode with the largest extent (the carrier) receives a copy of `x`; every
/// other factor is a 0/1 selector. Selector `j` pins the rank index of the next
/// non-carrier mode (cyclically) to `i_j`, and all selectors pin the carrier's
/// own rank index to 0. Because the pinning is a cyclic shift, every short rank
/// index is fixed by exactly one selector and the sum collapses to
/// `x[i_1..i_N]`.
pub fn gtri_construct(x: &DenseTensor) -> Result<GtriDecomposition> {
    let shape = x.shape();
    let n_modes = shape.len();
    if n_modes < 3 {
        bail!(InvalidArgument, "needs order >= 3, got {}", n_modes);
    }
    if x.data().iter().all(|&v| v == 0.0) {
        return Ok(GtriDecomposition::Zero {
            shape: shape.to_vec(),
        });
    }
    let carrier = (0..n_modes)
        .max_by_key(|&k| (shape[k], usize::MAX - k))
        .unwrap_or(0);
    let r = submax(shape);
    let ranks = vec![r; n_modes];
    let others: Vec<usize> = (0..n_modes).filter(|&k| k != carrier).collect();
    // pinned[j] = rank mode whose index selector j fixes to i_j.
    let mut pinned = vec![usize::MAX; n_modes];
    for (t, &j) in others.iter().enumerate() {
        pinned[j] = others[(t + 1) % others.len()];
    }

    let mut factors = Vec::with_capacity(n_modes);
    for n in 0..n_modes {
        let fshape = factor_shape(&ranks, shape, n);
        let t = if n == carrier {
            let mut src = vec![0usize; n_modes];
            DenseTensor::from_fn(&fshape, |p| {
                src[carrier] = p[carrier];
                for &j in &others {
                    let v = p[pinned[j]];
                    if v >= shape[j] {
                        return 0.0;
                    }
                    src[j] = v;
                }
                x[&src[..]]
            })
        } else {
            let pin = pinned[n];
            DenseTensor::from_fn(&fshape, |p| {
                if p[carrier] == 0 && p[pin] == p[n] {
                    1.0
                } else {
                    0.0
                }
            })
        };
        factors.push(t);
    }
    Ok(GtriDecomposition::Factors(MultipleFactors::new(factors)?))
}

/// Zero-pads every factor to `new_ranks`; the product is unchanged.
pub fn pad_ranks(f: &MultipleFactors, new_ranks: &[usize]) -> Result<MultipleFactors> {
    if new_ranks.len() != f.order() {
        bail!(ShapeMismatch, "{} ranks for order {}", new_ranks.len(), f.order());
    }
    if new_ranks.iter().zip(f.ranks()).any(|(&new, &old)| new < old) {
        bail!(
            InvalidArgument,
            "cannot pad ranks {:?} down to {:?}",
            f.ranks(),
            new_ranks
        );
    }
    let factors = (0..f.order())
        .map(|n| {
            let src = f.factor(n);
            DenseTensor::from_fn(&factor_shape(new_ranks, f.long_dims(), n), |p| {
                src.get(p).unwrap_or(0.0)
            })
        })
        .collect();
    MultipleFactors::new(factors)
}

/// Keeps the leading `ranks` block of every factor (inverse of [`pad_ranks`]
/// on padded input).
pub fn slice_ranks(f: &MultipleFactors, ranks: &[usize]) -> Result<MultipleFactors> {
    if ranks.len() != f.order() {
        bail!(ShapeMismatch, "{} ranks for order {}", ranks.len(), f.order());
    }
    if ranks.iter().zip(f.ranks()).any(|(&new, &old)| new > old || new == 0) {
        bail!(
            InvalidArgument,
            "cannot slice ranks {:?} to {:?}",
            f.ranks(),
            ranks
        );
    }
    let factors = (0..f.order())
        .map(|n| {
            let src = f.factor(n);
            DenseTensor::from_fn(&factor_shape(ranks, f.long_dims(), n), |p| src[p])
        })
        .collect();
    MultipleFactors::new(factors)
}

/// Diagonal embedding of CP factor matrices (`I_n x r` each) into a uniform
/// rank-`r` Multiple decomposition: factor `n` holds `a_n[i_n, q]` where every
/// short index equals `q`, and zero elsewhere.
pub fn cp_to_multiple(cp: &[Matrix]) -> Result<MultipleFactors> {
    let n_modes = cp.len();
    if n_modes < 3 {
        bail!(InvalidArgument, "needs order >= 3, got {}", n_modes);
    }
    let r = cp[0].cols();
    if cp.iter().any(|m| m.cols() != r) {
        bail!(ShapeMismatch, "CP factor matrices must share the column count");
    }
    let ranks = vec![r; n_modes];
    let long_dims: Vec<usize> = cp.iter().map(Matrix::rows).collect();
    let factors = cp
        .iter()
        .enumerate()
        .map(|(n, a)| {
            DenseTensor::from_fn(&factor_shape(&ranks, &long_dims, n), |p| {
                let q = p[if n == 0 { 1 } else { 0 }];
                let diagonal = p.iter().enumerate().all(|(k, &pk)| k == n || pk == q);
                if diagonal {
                    a[(p[n], q)]
                } else {
                    0.0
                }
            })
        })
        .collect();
    MultipleFactors::new(factors)
}

fn check_tucker(f: &MultipleFactors, us: &[Matrix]) -> Result<()> {
    if us.len() != f.order() {
        bail!(ShapeMismatch, "{} matrices for order {}", us.len(), f.order());
    }
    for (n, (u, &d)) in us.iter().zip(f.long_dims()).enumerate() {
        if u.cols() != d {
            bail!(
                ShapeMismatch,
                "U_{} has {} columns, mode extent is {}",
                n,
                u.cols(),
                d
            );
        }
    }
    Ok(())
}

/// `[(A_1 x_1 U_1) ... (A_N x_N U_N)]`: a Multiple decomposition whose factors
/// have been transformed along their long modes.
pub fn tucker_compose(f: &MultipleFactors, us: &[Matrix]) -> Result<DenseTensor> {
    check_tucker(f, us)?;
    let factors = f
        .factors()
        .iter()
        .zip(us)
        .enumerate()
        .map(|(n, (a, u))| a.mode_n_product(u, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(multiple_product(&MultipleFactors::new(factors)?))
}

/// Relative Frobenius deviation between [`tucker_compose`] and
/// `[A_1 ... A_N] x_1 U_1 ... x_N U_N`.
pub fn tucker_commutation_check(f: &MultipleFactors, us: &[Matrix]) -> Result<f64> {
    let lhs = tucker_compose(f, us)?;
    let mut rhs = multiple_product(f);
    for (n, u) in us.iter().enumerate() {
        rhs = rhs.mode_n_product(u, n)?;
    }
    let scale = rhs.fro_norm().max(f64::MIN_POSITIVE);
    Ok(math::sqrt(lhs.dist_sq(&rhs)?) / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use rand::Rng;

    fn random_tensor(shape: &[usize], seed: u64) -> DenseTensor {
        let mut rng = seeded_rng(seed);
        DenseTensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn gtri_exact_on_3x2x2() {
        let x = random_tensor(&[3, 2, 2], 1);
        let d = gtri_construct(&x).unwrap();
        assert_eq!(d.rank(), 2);
        let y = multiple_product(d.factors().unwrap());
        assert!(y.max_abs_diff(&x).unwrap() <= 1e-12);
    }

    #[test]
    fn gtri_of_a_column_has_rank_one() {
        let x = random_tensor(&[5, 1, 1], 2);
        let d = gtri_construct(&x).unwrap();
        assert_eq!(d.rank(), 1);
        assert!(multiple_product(d.factors().unwrap()).max_abs_diff(&x).unwrap() <= 1e-12);
    }

    #[test]
    fn gtri_order_four_with_carrier_not_first() {
        let x = random_tensor(&[2, 3, 4, 2], 3);
        let d = gtri_construct(&x).unwrap();
        assert_eq!(d.rank(), 3);
        assert!(multiple_product(d.factors().unwrap()).max_abs_diff(&x).unwrap() <= 1e-12);
    }

    #[test]
    fn gtri_zero_marker() {
        let d = gtri_construct(&DenseTensor::zeros(&[2, 2, 2])).unwrap();
        assert_eq!(d, GtriDecomposition::Zero { shape: vec![2, 2, 2] });
        assert_eq!(d.rank(), 0);
    }

    #[test]
    fn pad_identity_and_roundtrip() {
        let mut rng = seeded_rng(5);
        let f = MultipleFactors::random(&[1, 1, 1], &[2, 3, 2], 1.0, &mut rng).unwrap();
        assert_eq!(pad_ranks(&f, &[1, 1, 1]).unwrap(), f);
        let padded = pad_ranks(&f, &[3, 2, 2]).unwrap();
        assert_eq!(padded.ranks(), &[3, 2, 2]);
        let d = multiple_product(&padded)
            .max_abs_diff(&multiple_product(&f))
            .unwrap();
        assert!(d <= 1e-12);
        assert_eq!(slice_ranks(&padded, &[1, 1, 1]).unwrap(), f);
        assert!(pad_ranks(&padded, &[1, 2, 2]).is_err());
    }

    #[test]
    fn cp_rank_one_outer_product() {
        let a = Matrix::from_rows(&[&[1.0], &[2.0]]).unwrap();
        let b = Matrix::from_rows(&[&[1.0], &[1.0]]).unwrap();
        let c = b.clone();
        let x = multiple_product(&cp_to_multiple(&[a, b, c]).unwrap());
        for (l, &v) in x.data().iter().enumerate() {
            let i = x.unravel(l)[0];
            assert_eq!(v, (i + 1) as f64);
        }
    }

    #[test]
    fn cp_zero_and_inconsistent() {
        let z = Matrix::zeros(3, 2);
        let x = multiple_product(&cp_to_multiple(&[z.clone(), z.clone(), z.clone()]).unwrap());
        assert_eq!(x.fro_norm(), 0.0);
        assert!(cp_to_multiple(&[z.clone(), z, Matrix::zeros(3, 3)]).is_err());
    }

    #[test]
    fn tucker_identity_and_mode_one_scaling() {
        let mut rng = seeded_rng(6);
        let f = MultipleFactors::random(&[2, 3, 2], &[3, 4, 2], 1.0, &mut rng).unwrap();
        let ids: Vec<Matrix> = f.long_dims().iter().map(|&d| Matrix::identity(d)).collect();
        let x = multiple_product(&f);
        assert!(tucker_compose(&f, &ids).unwrap().max_abs_diff(&x).unwrap() <= 1e-12);
        let mut us = ids.clone();
        us[0] = Matrix::identity(3).scale(2.0);
        let y = tucker_compose(&f, &us).unwrap();
        assert!(y.max_abs_diff(&x.scale(2.0)).unwrap() <= 1e-12);
        assert!(tucker_commutation_check(&f, &us).unwrap() <= 1e-11);
        us[1] = Matrix::identity(3);
        assert!(tucker_compose(&f, &us).is_err());
    }
}
