use alloc::vec::Vec;

use super::product::{env_from_unfoldings, product_from_unfoldings, unfoldings, RankTables};
use super::{submax, MultipleFactors};
use crate::error::{bail, Result};
use crate::linalg::solve_right_spd;
use crate::math;
use crate::tensor::{DenseTensor, Matrix};

#[derive(Debug, Clone)]
pub struct AlsOptions {
    pub max_sweeps: usize,
    /// Stop once the relative change of the fit error drops below this.
    pub tol: f64,
    /// Ridge weight relative to `trace(E^T E) / K` for each factor update.
    pub ridge: f64,
    pub seed: u64,
    /// Starting point; random when `None`.
    pub init: Option<MultipleFactors>,
}

impl Default for AlsOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 200,
            tol: 1e-10,
            ridge: 1e-10,
            seed: 0,
            init: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlsOutcome {
    pub factors: MultipleFactors,
    /// `||x - product|| / ||x||` before the first sweep and after each sweep.
    pub rel_errors: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Block coordinate descent over the factors. Each update solves the ridge
/// least-squares problem `min ||X_(n) - A_(n) E_n^T||^2 + mu ||A_(n)||^2` in
/// closed form through the normal equations.
pub fn als_fit(x: &DenseTensor, ranks: &[usize], opts: &AlsOptions) -> Result<AlsOutcome> {
    let x_norm = x.fro_norm();
    if x_norm == 0.0 {
        bail!(InvalidArgument, "cannot fit the zero tensor");
    }
    if !x.is_finite() {
        bail!(NonFinite, "als input");
    }
    let dims = x.shape();
    let mut factors = match &opts.init {
        Some(init) => {
            if init.ranks() != ranks || init.long_dims() != dims {
                bail!(ShapeMismatch, "initial factors do not match ranks/shape");
            }
            init.clone()
        }
        None => {
            let s = math::powf(x_norm / x.numel() as f64, 1.0 / dims.len() as f64);
            let mut rng = crate::seeded_rng(opts.seed);
            MultipleFactors::random(ranks, dims, s, &mut rng)?
        }
    };
    let bound = submax(dims);
    if ranks.iter().any(|&r| r > bound) {
        log::warn!(
            "ranks {:?} exceed submax(shape) = {}; an exact fit exists at that rank",
            ranks,
            bound
        );
    }

    let tables = RankTables::new(ranks);
    let x_unf: Vec<Matrix> = (0..dims.len())
        .map(|n| x.unfold(n))
        .collect::<Result<_>>()?;
    let mut unf = unfoldings(&factors);
    let rel_err = |unf: &[Matrix]| -> Result<f64> {
        let y = product_from_unfoldings(unf, dims, &tables);
        Ok(math::sqrt(y.dist_sq(x)?) / x_norm)
    };
    let mut rel_errors = Vec::with_capacity(opts.max_sweeps + 1);
    rel_errors.push(rel_err(&unf)?);
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        for n in 0..dims.len() {
            let env = env_from_unfoldings(&unf, dims, &tables, n);
            let rhs = x_unf[n].matmul(&env)?;
            let mut gram = env.t_matmul(&env)?;
            let k = gram.rows();
            let trace: f64 = (0..k).map(|i| gram[(i, i)]).sum();
            let mu = if trace > 0.0 {
                opts.ridge * trace / k as f64
            } else {
                opts.ridge.max(f64::MIN_POSITIVE)
            };
            for i in 0..k {
                gram[(i, i)] += mu;
            }
            let a = solve_right_spd(&gram, &rhs)?;
            if a.data().iter().any(|v| !v.is_finite()) {
                bail!(NonFinite, "factor {} update in sweep {}", n, sweeps + 1);
            }
            unf[n] = a;
        }
        sweeps += 1;
        let err = rel_err(&unf)?;
        let prev = *rel_errors.last().unwrap_or(&err);
        rel_errors.push(err);
        if err < 1e-13 || (prev - err).abs() <= opts.tol * prev.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    for (n, u) in unf.iter().enumerate() {
        let shape = factors.factor(n).shape().to_vec();
        factors.set_factor(n, DenseTensor::fold(u, n, &shape)?)?;
    }
    Ok(AlsOutcome {
        factors,
        rel_errors,
        sweeps,
        converged,
    })
}
