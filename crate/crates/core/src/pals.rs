//! Proximal alternating minimization over network weights `Theta` and a sparse
//! perturbation `E`:
//!
//! ```text
//! Theta^{k+1} ~ argmin F(A_Theta, E^k) + lambda*phi(A_Theta) + eta/2 ||A_Theta - A_{Theta^k}||^2
//! E^{k+1}     = argmin F(A_{Theta^{k+1}}, E) + gamma*psi(E) + eta/2 ||E - E^k||^2
//! ```
//!
//! The `Theta` step runs Adam and keeps the best iterate it visits, so the
//! proximal objective never increases. Together with the exact `E` step this
//! makes `V_k = G^k + eta/2 (a_k + e_k)` nonincreasing, where
//! `a_k = ||A^k - A^{k-1}||^2` and `e_k = ||E^k - E^{k-1}||^2`.

use alloc::vec::Vec;

use crate::error::{bail, Error, Result};
use crate::imtd::ImtdModel;
use crate::linalg::numerical_rank;
use crate::math;
use crate::neural::{AdamConfig, AdamState};
use crate::rtc::ObservationMask;
use crate::tensor::{soft, DenseTensor, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PalsConfig {
    /// Weight of the smooth regularizer on `A`.
    pub lambda: f64,
    /// Weight of the l1 penalty on `E`; `f64::INFINITY` freezes `E` at zero.
    pub gamma: f64,
    /// Proximal parameter.
    pub eta: f64,
    /// Adam iterations per `Theta` step.
    pub inner_steps: usize,
    pub outer_iters: usize,
    /// Stop once `|G^{k+1} - G^k| <= tol * |G^k|`.
    pub tol: f64,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for PalsConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            gamma: 1e-2,
            eta: 0.1,
            inner_steps: 25,
            outer_iters: 400,
            tol: 1e-5,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl PalsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !(self.gamma >= 0.0) {
            bail!(
                InvalidArgument,
                "lambda and gamma must be nonnegative (got {}, {})",
                self.lambda,
                self.gamma
            );
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            bail!(InvalidArgument, "eta must be positive, got {}", self.eta);
        }
        if self.inner_steps == 0 {
            bail!(InvalidArgument, "inner_steps must be at least 1");
        }
        Ok(())
    }
}

/// One line of the solver history. Record `k` describes the iterate
/// `(Theta^k, E^k)`; record 0 is the initial point with `a_k = e_k = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub g: f64,
    pub v: f64,
    pub a_k: f64,
    pub e_k: f64,
}

/// A two-block model `G(A, E) = F(A, E) + lambda*phi(A) + gamma*psi(E)` on a
/// fixed coordinate grid.
pub trait TwoBlockProblem {
    /// Coordinates at which `A_Theta` is evaluated.
    fn coords(&self) -> &[Vec<f64>];

    /// `F(A, E) + lambda*phi(A)` and its gradient with respect to `A`.
    fn smooth_loss(&self, a: &DenseTensor, e: &DenseTensor, lambda: f64) -> Result<(f64, DenseTensor)>;

    /// Exact minimizer of the `E` subproblem.
    fn e_update(&self, a: &DenseTensor, e_prev: &DenseTensor, gamma: f64, eta: f64) -> Result<DenseTensor>;

    /// `gamma*psi(E)`; zero when `E` is frozen.
    fn sparse_penalty(&self, e: &DenseTensor, gamma: f64) -> f64 {
        if gamma.is_infinite() {
            0.0
        } else {
            gamma * e.l1_norm()
        }
    }

    fn objective(&self, a: &DenseTensor, e: &DenseTensor, cfg: &PalsConfig) -> Result<f64> {
        Ok(self.smooth_loss(a, e, cfg.lambda)?.0 + self.sparse_penalty(e, cfg.gamma))
    }
}

/// Elementwise minimizer of
/// `gamma|e| + [observed] (a + e - m)^2 + eta/2 (e - e_prev)^2`.
pub fn e_step(
    a: &DenseTensor,
    e_prev: &DenseTensor,
    m: &DenseTensor,
    mask: &ObservationMask,
    gamma: f64,
    eta: f64,
) -> Result<DenseTensor> {
    if !(eta > 0.0) {
        bail!(InvalidArgument, "eta must be positive, got {}", eta);
    }
    if a.shape() != e_prev.shape() || a.shape() != m.shape() || a.shape() != mask.shape() {
        bail!(
            ShapeMismatch,
            "e-step shapes {:?}, {:?}, {:?}, mask {:?}",
            a.shape(),
            e_prev.shape(),
            m.shape(),
            mask.shape()
        );
    }
    let data = a
        .data()
        .iter()
        .zip(e_prev.data())
        .zip(m.data())
        .zip(mask.observed())
        .map(|(((&a, &ep), &m), &obs)| {
            if obs {
                soft((2.0 * (m - a) + eta * ep) / (2.0 + eta), gamma / (2.0 + eta))
            } else {
                soft(ep, gamma / eta)
            }
        })
        .collect();
    DenseTensor::new(a.shape(), data)
}

#[derive(Debug, Clone)]
pub struct PalsState {
    pub model: ImtdModel,
    pub e: DenseTensor,
    /// `A_{Theta^k}` on the problem grid.
    pub a_prev: DenseTensor,
    pub history: Vec<IterationRecord>,
    adam: AdamState,
    /// Whether the last `Theta` step moved the model.
    accepted: bool,
}

#[derive(Debug, Clone)]
pub struct PalsOutcome {
    pub model: ImtdModel,
    pub e: DenseTensor,
    /// Final grid evaluation of the model.
    pub a: DenseTensor,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
}

fn diverged(iteration: usize, history: &[IterationRecord]) -> Error {
    Error::Diverged {
        iteration,
        history: history.to_vec(),
    }
}

impl PalsState {
    /// Starts from `model` with `E^0 = 0`.
    pub fn new<P: TwoBlockProblem + ?Sized>(problem: &P, model: ImtdModel, cfg: &PalsConfig) -> Result<Self> {
        cfg.validate()?;
        let a_prev = model.eval_grid(problem.coords())?;
        let e = DenseTensor::zeros(a_prev.shape());
        let g = problem.objective(&a_prev, &e, cfg)?;
        let history = alloc::vec![IterationRecord {
            iteration: 0,
            g,
            v: g,
            a_k: 0.0,
            e_k: 0.0,
        }];
        if !g.is_finite() {
            return Err(diverged(0, &history));
        }
        let adam = AdamState::new(cfg.adam, model.param_count());
        Ok(Self {
            model,
            e,
            a_prev,
            history,
            adam,
            accepted: true,
        })
    }

    pub fn iteration(&self) -> usize {
        self.history.len() - 1
    }

    /// Inexact `Theta` step: Adam on the proximal objective, keeping the best
    /// iterate. If no iterate improves on the start, the model is unchanged and
    /// Adam restarts with half the step size. Returns the proximal objective
    /// before and after.
    pub fn theta_step<P: TwoBlockProblem + ?Sized>(&mut self, problem: &P, cfg: &PalsConfig) -> Result<(f64, f64)> {
        let coords = problem.coords();
        let mut params = self.model.params();
        let mut best_params = params.clone();
        let mut best = f64::INFINITY;
        let mut start = f64::NAN;
        let mut trial = self.model.clone();
        for step in 0..=cfg.inner_steps {
            trial.set_params(&params)?;
            let (a, cache) = trial.eval_grid_cached(coords)?;
            let (smooth, mut grad) = problem.smooth_loss(&a, &self.e, cfg.lambda)?;
            let dev = a.sub(&self.a_prev)?;
            let loss = smooth + 0.5 * cfg.eta * dev.dot(&dev)?;
            if !loss.is_finite() {
                return Err(diverged(self.iteration() + 1, &self.history));
            }
            log::trace!("inner {} loss {:.6e}", step, loss);
            if step == 0 {
                start = loss;
            }
            if loss < best {
                best = loss;
                best_params.copy_from_slice(&params);
            }
            if step == cfg.inner_steps {
                break;
            }
            grad.axpy(cfg.eta, &dev)?;
            let g = trial.grid_backward_cached(&cache, &grad)?.flatten();
            self.adam.step(&mut params, &g)?;
        }
        self.accepted = best < start;
        if self.accepted {
            self.model.set_params(&best_params)?;
        } else {
            // No inner iterate improved: restart the moments with a smaller step.
            let mut adam = self.adam.config;
            adam.lr *= 0.5;
            self.adam = AdamState::new(adam, params.len());
            log::debug!("theta step rejected, adam lr now {:.3e}", adam.lr);
        }
        Ok((start, best))
    }

    /// One outer iteration: `Theta` step, `E` step, history record.
    pub fn step<P: TwoBlockProblem + ?Sized>(&mut self, problem: &P, cfg: &PalsConfig) -> Result<IterationRecord> {
        self.theta_step(problem, cfg)?;
        let a = self.model.eval_grid(problem.coords())?;
        let e = if cfg.gamma.is_infinite() {
            DenseTensor::zeros(a.shape())
        } else {
            problem.e_update(&a, &self.e, cfg.gamma, cfg.eta)?
        };
        let a_k = a.dist_sq(&self.a_prev)?;
        let e_k = e.dist_sq(&self.e)?;
        let g = problem.objective(&a, &e, cfg)?;
        let rec = IterationRecord {
            iteration: self.iteration() + 1,
            g,
            v: g + 0.5 * cfg.eta * (a_k + e_k),
            a_k,
            e_k,
        };
        if !(g.is_finite() && a_k.is_finite() && e_k.is_finite()) {
            let mut h = self.history.clone();
            h.push(rec);
            return Err(diverged(rec.iteration, &h));
        }
        self.a_prev = a;
        self.e = e;
        self.history.push(rec);
        Ok(rec)
    }

    pub fn last_step_accepted(&self) -> bool {
        self.accepted
    }

    /// Current Adam step size; halves after every rejected `Theta` step.
    pub fn learning_rate(&self) -> f64 {
        self.adam.config.lr
    }

    pub fn finish(self, converged: bool) -> PalsOutcome {
        PalsOutcome {
            model: self.model,
            e: self.e,
            a: self.a_prev,
            history: self.history,
            converged,
        }
    }
}

/// Halvings of the Adam step size after which a run whose `Theta` steps keep
/// being rejected counts as converged.
const MAX_HALVINGS: i32 = 10;

/// Runs outer iterations until the relative change of `G` after an accepted
/// `Theta` step drops below `tol`, or `outer_iters` is reached. A rejected step
/// leaves the model in place, so its small change in `G` says nothing about
/// convergence.
pub fn pals_run<P: TwoBlockProblem + ?Sized>(problem: &P, model: ImtdModel, cfg: &PalsConfig) -> Result<PalsOutcome> {
    let mut state = PalsState::new(problem, model, cfg)?;
    let mut converged = false;
    for _ in 0..cfg.outer_iters {
        let g_old = state.history[state.history.len() - 1].g;
        let rec = state.step(problem, cfg)?;
        log::debug!(
            "pals {}: G={:.6e} V={:.6e} a={:.3e} e={:.3e}",
            rec.iteration,
            rec.g,
            rec.v,
            rec.a_k,
            rec.e_k
        );
        let small = (g_old - rec.g).abs() <= cfg.tol * g_old.abs().max(f64::MIN_POSITIVE);
        let stalled = state.learning_rate() < cfg.adam.lr * math::powi(0.5, MAX_HALVINGS);
        if (small && state.last_step_accepted()) || stalled {
            converged = true;
            break;
        }
    }
    Ok(state.finish(converged))
}

/// Numerical rank of the Jacobian of `Theta -> A_Theta` on `coords`, with its
/// `(rows, cols) = (grid entries, parameters)`. Full row rank is the
/// submersion condition; one backward pass per grid entry, so keep it to toy
/// models.
pub fn jacobian_rank(model: &ImtdModel, coords: &[Vec<f64>], rel_tol: f64) -> Result<(usize, usize, usize)> {
    let (a, cache) = model.eval_grid_cached(coords)?;
    let rows = a.numel();
    let cols = model.param_count();
    let mut jac = Matrix::zeros(rows, cols);
    let mut unit = DenseTensor::zeros(a.shape());
    for l in 0..rows {
        unit.data_mut()[l] = 1.0;
        let g = model.grid_backward_cached(&cache, &unit)?.flatten();
        jac.row_mut(l).copy_from_slice(&g);
        unit.data_mut()[l] = 0.0;
    }
    Ok((numerical_rank(&jac, rel_tol), rows, cols))
}
