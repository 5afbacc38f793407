//! Bias-free sine perceptrons used as factor functions, their reverse-mode
//! gradients, the Adam optimizer, and the Lipschitz certificate for a product
//! of such networks.
//!
//! A network of depth `d` maps a scalar `x` to
//! `H_d * sin(w0 * H_{d-1} * ... sin(w0 * H_1 * x))`. There are no bias terms,
//! so the output at `x = 0` is exactly zero.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{bail, Error, Result};
use crate::math;
use crate::tensor::Matrix;
use crate::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpConfig {
    /// Number of weight matrices.
    pub depth: usize,
    pub width: usize,
    pub out_dim: usize,
    /// Activation frequency: `sigma(z) = sin(omega0 * z)`.
    pub omega0: f64,
}

impl MlpConfig {
    pub fn new(out_dim: usize) -> Self {
        Self {
            depth: 4,
            width: 64,
            out_dim,
            omega0: 5.0,
        }
    }

    /// `(rows, cols)` of each weight matrix.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        (0..self.depth)
            .map(|i| {
                let cols = if i == 0 { 1 } else { self.width };
                let rows = if i + 1 == self.depth { self.out_dim } else { self.width };
                (rows, cols)
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 || self.out_dim == 0 {
            bail!(InvalidArgument, "depth, width and output size must be positive");
        }
        if !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            bail!(InvalidArgument, "omega0 must be positive, got {}", self.omega0);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    weights: Vec<Matrix>,
    omega0: f64,
}

/// Activations kept by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to every layer, `batch x cols(H_i)`.
    inputs: Vec<Matrix>,
    /// Pre-activations of the hidden layers, `batch x rows(H_i)`.
    preacts: Vec<Matrix>,
}

impl MlpCache {
    pub fn batch(&self) -> usize {
        self.inputs[0].rows()
    }
}

/// Gradient with the same layout as [`Mlp`]'s weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub weights: Vec<Matrix>,
}

impl MlpGrad {
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for w in &self.weights {
            out.extend_from_slice(w.data());
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }
}

impl Mlp {
    pub fn new(weights: Vec<Matrix>, omega0: f64) -> Result<Self> {
        if weights.is_empty() {
            bail!(InvalidArgument, "a network needs at least one layer");
        }
        if weights[0].cols() != 1 {
            bail!(ShapeMismatch, "first layer must take a scalar input");
        }
        for (i, w) in weights.windows(2).enumerate() {
            if w[1].cols() != w[0].rows() {
                bail!(
                    ShapeMismatch,
                    "layer {} outputs {} values, layer {} takes {}",
                    i,
                    w[0].rows(),
                    i + 1,
                    w[1].cols()
                );
            }
        }
        if !(omega0 > 0.0 && omega0.is_finite()) {
            bail!(InvalidArgument, "omega0 must be positive, got {}", omega0);
        }
        Ok(Self { weights, omega0 })
    }

    /// Entries uniform in `+-sqrt(6 / fan_in) / omega0`.
    pub fn init(cfg: &MlpConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let weights = cfg
            .layer_dims()
            .into_iter()
            .map(|(rows, cols)| {
                let bound = math::sqrt(6.0 / cols as f64) / cfg.omega0;
                Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..=bound))
            })
            .collect();
        Self::new(weights, cfg.omega0)
    }

    pub fn zeros(cfg: &MlpConfig) -> Result<Self> {
        cfg.validate()?;
        let weights = cfg
            .layer_dims()
            .into_iter()
            .map(|(rows, cols)| Matrix::zeros(rows, cols))
            .collect();
        Self::new(weights, cfg.omega0)
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn out_dim(&self) -> usize {
        self.weights[self.weights.len() - 1].rows()
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.rows() * w.cols()).sum()
    }

    pub fn params_into(&self, out: &mut Vec<f64>) {
        for w in &self.weights {
            out.extend_from_slice(w.data());
        }
    }

    /// Overwrites the weights from a flat slice; returns the number consumed.
    pub fn set_params(&mut self, src: &[f64]) -> usize {
        let mut off = 0;
        for w in &mut self.weights {
            let n = w.data().len();
            w.data_mut().copy_from_slice(&src[off..off + n]);
            off += n;
        }
        off
    }

    pub fn zero_grad(&self) -> MlpGrad {
        MlpGrad {
            weights: self
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
        }
    }

    /// Evaluates the network at one coordinate.
    pub fn forward(&self, x: f64) -> Result<(Vec<f64>, MlpCache)> {
        let (out, cache) = self.forward_batch(&[x])?;
        Ok((out.into_data(), cache))
    }

    /// Evaluates the network at every coordinate; row `b` of the result is the
    /// output for `xs[b]`.
    pub fn forward_batch(&self, xs: &[f64]) -> Result<(Matrix, MlpCache)> {
        if xs.is_empty() {
            bail!(InvalidArgument, "empty batch");
        }
        if xs.iter().any(|x| !x.is_finite()) {
            bail!(NonFinite, "network input");
        }
        let mut y = Matrix::new(xs.len(), 1, xs.to_vec())?;
        let mut inputs = Vec::with_capacity(self.depth());
        let mut preacts = Vec::with_capacity(self.depth() - 1);
        let last = self.depth() - 1;
        for (i, h) in self.weights.iter().enumerate() {
            let z = y.matmul_t(h)?;
            inputs.push(y);
            if i == last {
                if z.data().iter().any(|v| !v.is_finite()) {
                    bail!(NonFinite, "network output");
                }
                return Ok((z, MlpCache { inputs, preacts }));
            }
            let w0 = self.omega0;
            y = Matrix::new(
                z.rows(),
                z.cols(),
                z.data().iter().map(|&v| math::sin(w0 * v)).collect(),
            )?;
            preacts.push(z);
        }
        unreachable!("loop returns at the last layer")
    }

    /// Gradient of `sum_b <cotangent[b], output[b]>` with respect to every weight.
    pub fn backward(&self, cache: &MlpCache, cotangent: &Matrix) -> Result<MlpGrad> {
        if cache.inputs.len() != self.depth()
            || cache.preacts.len() + 1 != self.depth()
            || cotangent.rows() != cache.batch()
            || cotangent.cols() != self.out_dim()
        {
            bail!(ShapeMismatch, "cache or cotangent does not match this network");
        }
        let mut grads: Vec<Matrix> = Vec::with_capacity(self.depth());
        let mut g = cotangent.clone();
        for i in (0..self.depth()).rev() {
            let input = &cache.inputs[i];
            if input.cols() != self.weights[i].cols() {
                return Err(Error::ShapeMismatch("cache does not match this network".into()));
            }
            grads.push(g.t_matmul(input)?);
            if i == 0 {
                break;
            }
            let dy = g.matmul(&self.weights[i])?;
            let z = &cache.preacts[i - 1];
            let w0 = self.omega0;
            let data = dy
                .data()
                .iter()
                .zip(z.data())
                .map(|(&d, &zv)| d * w0 * math::cos(w0 * zv))
                .collect();
            g = Matrix::new(dy.rows(), dy.cols(), data)?;
        }
        grads.reverse();
        Ok(MlpGrad { weights: grads })
    }

    /// Single-coordinate backward with a cotangent vector.
    pub fn backward_one(&self, cache: &MlpCache, cotangent: &[f64]) -> Result<MlpGrad> {
        let ct = Matrix::new(1, cotangent.len(), cotangent.to_vec())?;
        self.backward(cache, &ct)
    }
}

/// Largest entrywise l1 norm over every weight matrix of every network.
pub fn weight_l1_max<'a>(nets: impl IntoIterator<Item = &'a Mlp>) -> f64 {
    nets.into_iter()
        .flat_map(|m| m.weights.iter())
        .map(Matrix::l1_norm)
        .fold(0.0, f64::max)
}

/// Lipschitz certificate `delta = sqrt(2) * omega^(N d) * kappa^(N d - N) * zeta^(N - 1)`
/// for the product of `N` depth-`d` networks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzCert {
    pub omega: f64,
    pub kappa: f64,
    pub zeta: f64,
    pub order: usize,
    pub depth: usize,
    pub delta: f64,
}

pub fn lipschitz_bound(
    omega: f64,
    kappa: f64,
    zeta: f64,
    order: usize,
    depth: usize,
) -> Result<LipschitzCert> {
    if !(omega > 0.0 && kappa > 0.0 && zeta > 0.0) {
        bail!(
            InvalidArgument,
            "omega, kappa and zeta must be positive (got {}, {}, {})",
            omega,
            kappa,
            zeta
        );
    }
    if order == 0 || depth == 0 {
        bail!(InvalidArgument, "order and depth must be at least 1");
    }
    let nd = (order * depth) as i32;
    let delta = core::f64::consts::SQRT_2
        * math::powi(omega, nd)
        * math::powi(kappa, nd - order as i32)
        * math::powi(zeta, order as i32 - 1);
    Ok(LipschitzCert {
        omega,
        kappa,
        zeta,
        order,
        depth,
        delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            bail!(
                ShapeMismatch,
                "adam state has {} slots, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            );
        }
        if grads.iter().any(|g| !g.is_finite()) {
            bail!(NonFinite, "gradient passed to adam");
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.t += 1;
        let bc1 = 1.0 - math::powi(beta1, self.t as i32);
        let bc2 = 1.0 - math::powi(beta2, self.t as i32);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (math::sqrt(v_hat) + eps);
        }
        Ok(())
    }
}
