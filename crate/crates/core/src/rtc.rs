//! Robust tensor completion with an implicit Multiple decomposition:
//!
//! ```text
//! min ||P_Omega(A_Theta + E - M)||^2 + lambda*TV(A_Theta) + gamma*||E||_1
//! ```
//!
//! `E` absorbs sparse outliers (salt-and-pepper noise) on the observed set,
//! TV is the anisotropic first-difference total variation smoothed by a
//! Charbonnier penalty, and the model is fitted with [`crate::pals`].

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng as _;

use crate::error::{bail, Result};
use crate::imtd::{index_domains, index_grid, ImtdModel};
use crate::math;
use crate::multiple::rank_bounds;
use crate::neural::MlpConfig;
use crate::pals::{e_step, pals_run, IterationRecord, PalsConfig, TwoBlockProblem};
use crate::seeded_rng;
use crate::tensor::DenseTensor;

/// Intensity range of normalized data: values live in `[0, PEAK]`.
pub const PEAK: f64 = 1.0;

/// Default Charbonnier smoothing of the TV term.
pub const TV_EPS: f64 = 1e-4;

/// Observed set `Omega` as a boolean tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationMask {
    shape: Vec<usize>,
    observed: Vec<bool>,
}

impl ObservationMask {
    pub fn new(shape: &[usize], observed: Vec<bool>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if observed.len() != numel {
            bail!(ShapeMismatch, "{} mask entries for shape {:?}", observed.len(), shape);
        }
        Ok(Self {
            shape: shape.to_vec(),
            observed,
        })
    }

    pub fn full(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            observed: vec![true; shape.iter().product()],
        }
    }

    /// Exactly `round(sr * numel)` entries chosen uniformly without replacement.
    pub fn random(shape: &[usize], sr: f64, seed: u64) -> Result<Self> {
        if !(sr > 0.0 && sr <= 1.0) {
            bail!(InvalidArgument, "sampling rate must be in (0, 1], got {}", sr);
        }
        let numel: usize = shape.iter().product();
        let keep = (math::round(sr * numel as f64) as usize).min(numel);
        let mut observed = vec![false; numel];
        let mut rng = seeded_rng(seed);
        for i in sample(&mut rng, numel, keep) {
            observed[i] = true;
        }
        Self::new(shape, observed)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn count(&self) -> usize {
        self.observed.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.observed.len().max(1) as f64
    }

    /// `P_Omega(x)`.
    pub fn apply(&self, x: &DenseTensor) -> Result<DenseTensor> {
        if x.shape() != self.shape() {
            bail!(ShapeMismatch, "tensor {:?}, mask {:?}", x.shape(), self.shape);
        }
        let data = x
            .data()
            .iter()
            .zip(&self.observed)
            .map(|(&v, &o)| if o { v } else { 0.0 })
            .collect();
        DenseTensor::new(x.shape(), data)
    }
}

/// Keeps a fraction `sr` of the entries of `x` and replaces a fraction `sigma`
/// of the kept ones by `0` or `PEAK` with equal probability. Unobserved
/// entries of the returned tensor are zero.
pub fn corrupt(x: &DenseTensor, sr: f64, sigma: f64, seed: u64) -> Result<(DenseTensor, ObservationMask)> {
    if !(0.0..1.0).contains(&sigma) && sigma != 1.0 {
        bail!(InvalidArgument, "noise fraction must be in [0, 1], got {}", sigma);
    }
    let mask = ObservationMask::random(x.shape(), sr, seed)?;
    let mut m = mask.apply(x)?;
    let kept: Vec<usize> = (0..x.numel()).filter(|&i| mask.observed[i]).collect();
    let n_noisy = math::round(sigma * kept.len() as f64) as usize;
    let mut rng = seeded_rng(seed ^ 0x5eed_0f_5a17);
    for j in sample(&mut rng, kept.len(), n_noisy) {
        m.data_mut()[kept[j]] = if rng.gen_bool(0.5) { PEAK } else { 0.0 };
    }
    Ok((m, mask))
}

/// Smoothed anisotropic total variation
/// `sum_n sum_i charbonnier(x[i + e_n] - x[i], eps)` and its gradient.
pub fn tv_l1(x: &DenseTensor, eps: f64) -> Result<(f64, DenseTensor)> {
    if !(eps > 0.0) {
        bail!(InvalidArgument, "tv smoothing must be positive, got {}", eps);
    }
    let shape = x.shape();
    let data = x.data();
    let mut grad = DenseTensor::zeros(shape);
    let g = grad.data_mut();
    let mut value = 0.0;
    let mut stride = 1;
    for &extent in shape {
        for l in 0..data.len() {
            if (l / stride) % extent + 1 < extent {
                let d = data[l + stride] - data[l];
                value += math::charbonnier(d, eps);
                let c = math::charbonnier_grad(d, eps);
                g[l + stride] += c;
                g[l] -= c;
            }
        }
        stride *= extent;
    }
    Ok((value, grad))
}

/// Uniform rank from the shape heuristic, clamped to `[1, 24]`.
pub fn default_ranks(shape: &[usize]) -> Result<Vec<usize>> {
    let r = rank_bounds(shape)?.recommended.clamp(1, 24);
    Ok(vec![r; shape.len()])
}

/// `1e-2 * ||M||_F / sqrt(numel)`.
pub fn default_gamma(m: &DenseTensor) -> f64 {
    1e-2 * m.fro_norm() / math::sqrt(m.numel() as f64)
}

/// Hyperparameters used when none are given; `gamma` is data dependent, see
/// [`default_gamma`].
pub fn default_config(m: &DenseTensor, seed: u64) -> PalsConfig {
    PalsConfig {
        gamma: default_gamma(m),
        seed,
        ..PalsConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct RtcProblem {
    pub m: DenseTensor,
    pub mask: ObservationMask,
    pub peak: f64,
    pub config: PalsConfig,
    pub ranks: Vec<usize>,
    pub tv_eps: f64,
    /// Depth, width and frequency of the factor networks.
    pub net: MlpConfig,
    coords: Vec<Vec<f64>>,
}

impl RtcProblem {
    pub fn new(
        m: DenseTensor,
        mask: ObservationMask,
        ranks: Vec<usize>,
        config: PalsConfig,
    ) -> Result<Self> {
        if m.shape() != mask.shape() {
            bail!(ShapeMismatch, "data {:?}, mask {:?}", m.shape(), mask.shape());
        }
        if ranks.len() != m.order() {
            bail!(ShapeMismatch, "{} ranks for order {}", ranks.len(), m.order());
        }
        config.validate()?;
        let coords = index_grid(m.shape());
        Ok(Self {
            m,
            mask,
            peak: PEAK,
            config,
            ranks,
            tv_eps: TV_EPS,
            net: MlpConfig::new(1),
            coords,
        })
    }

    pub fn shape(&self) -> &[usize] {
        self.m.shape()
    }

    pub fn init_model(&self) -> Result<ImtdModel> {
        let mut rng = seeded_rng(self.config.seed);
        ImtdModel::init(&self.ranks, index_domains(self.shape()), &self.net, &mut rng)
    }
}

impl TwoBlockProblem for RtcProblem {
    fn coords(&self) -> &[Vec<f64>] {
        &self.coords
    }

    fn smooth_loss(&self, a: &DenseTensor, e: &DenseTensor, lambda: f64) -> Result<(f64, DenseTensor)> {
        let mut value = 0.0;
        let mut grad = DenseTensor::zeros(a.shape());
        for ((((g, &a), &e), &m), &obs) in grad
            .data_mut()
            .iter_mut()
            .zip(a.data())
            .zip(e.data())
            .zip(self.m.data())
            .zip(self.mask.observed())
        {
            if obs {
                let r = a + e - m;
                value += r * r;
                *g = 2.0 * r;
            }
        }
        if lambda > 0.0 {
            let (tv, tv_grad) = tv_l1(a, self.tv_eps)?;
            value += lambda * tv;
            grad.axpy(lambda, &tv_grad)?;
        }
        Ok((value, grad))
    }

    fn e_update(&self, a: &DenseTensor, e_prev: &DenseTensor, gamma: f64, eta: f64) -> Result<DenseTensor> {
        e_step(a, e_prev, &self.m, &self.mask, gamma, eta)
    }
}

#[derive(Debug, Clone)]
pub struct RtcOutcome {
    /// Recovered tensor clamped to `[0, peak]`.
    pub x_hat: DenseTensor,
    pub e_hat: DenseTensor,
    pub model: ImtdModel,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
}

pub fn rtc_recover(p: &RtcProblem) -> Result<RtcOutcome> {
    let out = pals_run(p, p.init_model()?, &p.config)?;
    let peak = p.peak;
    Ok(RtcOutcome {
        x_hat: out.a.map(|v| v.clamp(0.0, peak)),
        e_hat: out.e,
        model: out.model,
        history: out.history,
        converged: out.converged,
    })
}
