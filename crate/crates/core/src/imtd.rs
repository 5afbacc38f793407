//! Implicit Multiple tensor decomposition: each factor tensor is produced by
//! a sine network of one scalar coordinate, and the tensor becomes a
//! continuous function
//!
//! ```text
//! f(x_1, ..., x_N) = [A_1(x_1) A_2(x_2) ... A_N(x_N)]
//! ```
//!
//! Network `n` outputs `prod_{k != n} r_k` values, read as the mode-`n` slice
//! of the factor (short indices linearized first-fastest, the singleton long
//! mode squeezed). Stacking the outputs over a coordinate list gives exactly
//! `unfold(A_n, n)`, so grid evaluation is one Multiple product and the
//! gradient with respect to the outputs of net `n` is `unfold(G, n) * E_n`.
//!
//! Coordinates are mapped affinely from each domain onto
//! `[NET_INPUT_LO, NET_INPUT_LO + span]` before entering the network. The
//! interval stays away from 0 because a bias-free sine network is odd: on a
//! symmetric interval every factor would satisfy `A(-u) = -A(u)` and would
//! vanish identically at the midpoint. Integer grids use a span proportional
//! to the extent so that neighbouring indices stay distinguishable for
//! low-frequency networks.

use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{bail, Result};
use crate::math;
use crate::multiple::product::{env_from_unfoldings, product_from_unfoldings};
use crate::multiple::{contract_slices, contract_slices_grad, slice_len, MultipleFactors, RankTables};
use crate::neural::{lipschitz_bound, weight_l1_max, LipschitzCert, Mlp, MlpCache, MlpConfig, MlpGrad};
use crate::tensor::{DenseTensor, Matrix};

/// Lower end of every network input interval.
pub const NET_INPUT_LO: f64 = 0.5;

/// Network input distance between neighbouring integer grid coordinates.
pub const GRID_SPACING: f64 = 0.25;

/// A closed coordinate interval and its affine map onto the network input
/// interval `[NET_INPUT_LO, NET_INPUT_LO + span]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordMap {
    pub lo: f64,
    pub hi: f64,
    pub span: f64,
}

impl CoordMap {
    /// Unit span.
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        Self::with_span(lo, hi, 1.0)
    }

    pub fn with_span(lo: f64, hi: f64, span: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            bail!(InvalidArgument, "domain [{}, {}] must be a finite, nonempty interval", lo, hi);
        }
        if !(span > 0.0 && span.is_finite()) {
            bail!(InvalidArgument, "span must be positive, got {}", span);
        }
        Ok(Self { lo, hi, span })
    }

    /// Domain `[0, extent - 1]` for integer grid coordinates (`[0, 1]` for a
    /// singleton mode), `GRID_SPACING` apart after mapping.
    pub fn for_extent(extent: usize) -> Self {
        let hi = (extent.max(2) - 1) as f64;
        Self {
            lo: 0.0,
            hi,
            span: hi * GRID_SPACING,
        }
    }

    #[inline]
    pub fn to_net(&self, x: f64) -> f64 {
        NET_INPUT_LO + (x - self.lo) / (self.hi - self.lo) * self.span
    }

    /// Largest network input of the domain.
    pub fn net_sup(&self) -> f64 {
        NET_INPUT_LO + self.span
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

#[derive(Debug, Clone)]
pub struct ImtdModel {
    ranks: Vec<usize>,
    nets: Vec<Mlp>,
    domains: Vec<CoordMap>,
    tables: RankTables,
}

impl PartialEq for ImtdModel {
    fn eq(&self, other: &Self) -> bool {
        self.ranks == other.ranks && self.nets == other.nets && self.domains == other.domains
    }
}

/// Per-network weight gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ImtdGrad {
    pub nets: Vec<MlpGrad>,
}

impl ImtdGrad {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.nets {
            g.flatten_into(&mut out);
        }
        out
    }
}

/// Forward state of [`ImtdModel::eval_grid_cached`].
#[derive(Debug, Clone)]
pub struct GridCache {
    dims: Vec<usize>,
    unfoldings: Vec<Matrix>,
    caches: Vec<MlpCache>,
}

/// Forward state of [`ImtdModel::eval_points_cached`].
#[derive(Debug, Clone)]
pub struct PointsCache {
    batch: usize,
    /// One row per point, or a single row when the mode's coordinate is the
    /// same for every point.
    outputs: Vec<Matrix>,
    caches: Vec<MlpCache>,
}

impl PointsCache {
    fn row(&self, n: usize, b: usize) -> &[f64] {
        let o = &self.outputs[n];
        o.row(if o.rows() == 1 { 0 } else { b })
    }
}

impl ImtdModel {
    pub fn new(ranks: &[usize], nets: Vec<Mlp>, domains: Vec<CoordMap>) -> Result<Self> {
        let n_modes = ranks.len();
        if n_modes < 3 {
            bail!(InvalidArgument, "needs order >= 3, got {}", n_modes);
        }
        if ranks.iter().any(|&r| r == 0) {
            bail!(InvalidArgument, "ranks must be positive");
        }
        if nets.len() != n_modes || domains.len() != n_modes {
            bail!(
                ShapeMismatch,
                "{} ranks, {} networks, {} domains",
                n_modes,
                nets.len(),
                domains.len()
            );
        }
        for (n, net) in nets.iter().enumerate() {
            let want = slice_len(ranks, n);
            if net.out_dim() != want {
                bail!(
                    ShapeMismatch,
                    "network {} outputs {} values, ranks need {}",
                    n,
                    net.out_dim(),
                    want
                );
            }
        }
        Ok(Self {
            ranks: ranks.to_vec(),
            nets,
            domains,
            tables: RankTables::new(ranks),
        })
    }

    /// Randomly initialized networks sharing `template`'s depth, width and
    /// frequency (its `out_dim` is ignored).
    pub fn init(
        ranks: &[usize],
        domains: Vec<CoordMap>,
        template: &MlpConfig,
        rng: &mut crate::Rng,
    ) -> Result<Self> {
        let nets = (0..ranks.len())
            .map(|n| {
                let cfg = MlpConfig {
                    out_dim: slice_len(ranks, n),
                    ..*template
                };
                Mlp::init(&cfg, rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ranks, nets, domains)
    }

    pub fn order(&self) -> usize {
        self.ranks.len()
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn nets(&self) -> &[Mlp] {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut [Mlp] {
        &mut self.nets
    }

    pub fn domains(&self) -> &[CoordMap] {
        &self.domains
    }

    pub fn param_count(&self) -> usize {
        self.nets.iter().map(Mlp::param_count).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for net in &self.nets {
            net.params_into(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.param_count() {
            bail!(
                ShapeMismatch,
                "model has {} parameters, got {}",
                self.param_count(),
                src.len()
            );
        }
        let mut off = 0;
        for net in &mut self.nets {
            off += net.set_params(&src[off..]);
        }
        Ok(())
    }

    fn warn_outside(&self, n: usize, xs: &[f64]) {
        let d = self.domains[n];
        if let Some(x) = xs.iter().find(|&&x| !d.contains(x)) {
            log::warn!(
                "coordinate {} outside domain [{}, {}] of mode {}; extrapolating",
                x,
                d.lo,
                d.hi,
                n
            );
        }
    }

    fn net_inputs(&self, n: usize, xs: &[f64]) -> Vec<f64> {
        self.warn_outside(n, xs);
        xs.iter().map(|&x| self.domains[n].to_net(x)).collect()
    }

    /// `f(x)` at a single coordinate vector.
    pub fn eval_point(&self, x: &[f64]) -> Result<f64> {
        Ok(self.eval_points(x)?[0])
    }

    /// `f` at many points, given as a flat array with `order()` coordinates per
    /// point.
    pub fn eval_points(&self, points: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval_points_cached(points)?.0)
    }

    pub fn eval_points_cached(&self, points: &[f64]) -> Result<(Vec<f64>, PointsCache)> {
        let n_modes = self.order();
        if points.is_empty() || points.len() % n_modes != 0 {
            bail!(
                ShapeMismatch,
                "{} coordinates is not a whole number of {}-d points",
                points.len(),
                n_modes
            );
        }
        let batch = points.len() / n_modes;
        let mut outputs = Vec::with_capacity(n_modes);
        let mut caches = Vec::with_capacity(n_modes);
        for n in 0..n_modes {
            let mut xs: Vec<f64> = points.iter().skip(n).step_by(n_modes).copied().collect();
            if xs.iter().all(|&x| x == xs[0]) {
                xs.truncate(1);
            }
            let (out, cache) = self.nets[n].forward_batch(&self.net_inputs(n, &xs))?;
            outputs.push(out);
            caches.push(cache);
        }
        let cache = PointsCache {
            batch,
            outputs,
            caches,
        };
        let mut values = Vec::with_capacity(batch);
        let mut slices: Vec<&[f64]> = Vec::with_capacity(n_modes);
        for b in 0..batch {
            slices.clear();
            slices.extend((0..n_modes).map(|n| cache.row(n, b)));
            values.push(contract_slices(&self.tables, &slices));
        }
        Ok((values, cache))
    }

    /// Gradient of `sum_b cotangent[b] * f(x_b)` for the points of `cache`.
    pub fn points_backward(&self, cache: &PointsCache, cotangent: &[f64]) -> Result<ImtdGrad> {
        if cotangent.len() != cache.batch {
            bail!(ShapeMismatch, "{} cotangents for {} points", cotangent.len(), cache.batch);
        }
        let mut out_grads: Vec<Matrix> = cache
            .outputs
            .iter()
            .map(|o| Matrix::zeros(o.rows(), o.cols()))
            .collect();
        let mut slices: Vec<&[f64]> = Vec::with_capacity(self.order());
        for (b, &w) in cotangent.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            slices.clear();
            slices.extend((0..self.order()).map(|n| cache.row(n, b)));
            let mut rows: Vec<&mut [f64]> = out_grads
                .iter_mut()
                .map(|g| {
                    let r = if g.rows() == 1 { 0 } else { b };
                    g.row_mut(r)
                })
                .collect();
            contract_slices_grad(&self.tables, &slices, w, &mut rows);
        }
        let nets = self
            .nets
            .iter()
            .zip(&cache.caches)
            .zip(&out_grads)
            .map(|((net, c), g)| net.backward(c, g))
            .collect::<Result<Vec<_>>>()?;
        Ok(ImtdGrad { nets })
    }

    /// `f` on the Cartesian grid `coords[0] x ... x coords[N-1]`.
    pub fn eval_grid(&self, coords: &[Vec<f64>]) -> Result<DenseTensor> {
        Ok(self.eval_grid_cached(coords)?.0)
    }

    pub fn eval_grid_cached(&self, coords: &[Vec<f64>]) -> Result<(DenseTensor, GridCache)> {
        if coords.len() != self.order() || coords.iter().any(Vec::is_empty) {
            bail!(
                ShapeMismatch,
                "need {} nonempty coordinate lists",
                self.order()
            );
        }
        let dims: Vec<usize> = coords.iter().map(Vec::len).collect();
        let mut unfoldings = Vec::with_capacity(self.order());
        let mut caches = Vec::with_capacity(self.order());
        for (n, xs) in coords.iter().enumerate() {
            let (out, cache) = self.nets[n].forward_batch(&self.net_inputs(n, xs))?;
            unfoldings.push(out);
            caches.push(cache);
        }
        let x = product_from_unfoldings(&unfoldings, &dims, &self.tables);
        Ok((
            x,
            GridCache {
                dims,
                unfoldings,
                caches,
            },
        ))
    }

    /// Gradient of `<cotangent, eval_grid(coords)>` with respect to every weight.
    pub fn grid_backward(&self, coords: &[Vec<f64>], cotangent: &DenseTensor) -> Result<ImtdGrad> {
        let (_, cache) = self.eval_grid_cached(coords)?;
        self.grid_backward_cached(&cache, cotangent)
    }

    pub fn grid_backward_cached(&self, cache: &GridCache, cotangent: &DenseTensor) -> Result<ImtdGrad> {
        if cotangent.shape() != cache.dims.as_slice() {
            bail!(
                ShapeMismatch,
                "cotangent shape {:?}, grid shape {:?}",
                cotangent.shape(),
                cache.dims
            );
        }
        let nets = (0..self.order())
            .map(|n| {
                let env = env_from_unfoldings(&cache.unfoldings, &cache.dims, &self.tables, n);
                let d_out = cotangent.unfold(n)?.matmul(&env)?;
                self.nets[n].backward(&cache.caches[n], &d_out)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ImtdGrad { nets })
    }

    /// The factor tensors produced on a grid, as an explicit decomposition.
    pub fn factors_on_grid(&self, coords: &[Vec<f64>]) -> Result<MultipleFactors> {
        let (_, cache) = self.eval_grid_cached(coords)?;
        cache
            .unfoldings
            .iter()
            .enumerate()
            .map(|(n, u)| {
                let mut shape = self.ranks.clone();
                shape[n] = cache.dims[n];
                DenseTensor::fold(u, n, &shape)
            })
            .collect::<Result<Vec<_>>>()
            .and_then(MultipleFactors::new)
    }

    /// Certificate with `omega` measured from the weights, `kappa = omega0`
    /// and `zeta` the largest network input over all domains.
    pub fn certificate(&self) -> Result<LipschitzCert> {
        let depth = self.nets[0].depth();
        if self.nets.iter().any(|m| m.depth() != depth) {
            bail!(InvalidArgument, "networks must share the same depth");
        }
        let kappa = self.nets.iter().map(Mlp::omega0).fold(0.0, f64::max);
        let omega = weight_l1_max(&self.nets);
        let zeta = self.domains.iter().map(CoordMap::net_sup).fold(0.0, f64::max);
        lipschitz_bound(omega, kappa, zeta, self.order(), depth)
    }

    /// Largest `|f(x) - f(y)| / ||u(x) - u(y)||` over random pairs drawn
    /// uniformly from the domains, where `u` is the normalized network-input
    /// coordinate the certificate refers to.
    pub fn empirical_lipschitz(&self, n_pairs: usize, seed: u64) -> Result<f64> {
        let n_modes = self.order();
        let mut rng = crate::seeded_rng(seed);
        let mut pts = Vec::with_capacity(2 * n_pairs * n_modes);
        for _ in 0..2 * n_pairs {
            for d in &self.domains {
                pts.push(rng.gen_range(d.lo..=d.hi));
            }
        }
        if pts.is_empty() {
            return Ok(0.0);
        }
        let values = self.eval_points(&pts)?;
        let mut best: f64 = 0.0;
        for k in 0..n_pairs {
            let a = &pts[2 * k * n_modes..(2 * k + 1) * n_modes];
            let b = &pts[(2 * k + 1) * n_modes..(2 * k + 2) * n_modes];
            let dist = math::sqrt(
                a.iter()
                    .zip(b)
                    .zip(&self.domains)
                    .map(|((&x, &y), d)| {
                        let diff = d.to_net(x) - d.to_net(y);
                        diff * diff
                    })
                    .sum(),
            );
            if dist > 0.0 {
                best = best.max((values[2 * k] - values[2 * k + 1]).abs() / dist);
            }
        }
        Ok(best)
    }
}

/// Integer coordinates `0..I_n` for every mode.
pub fn index_grid(dims: &[usize]) -> Vec<Vec<f64>> {
    dims.iter()
        .map(|&d| (0..d).map(|i| i as f64).collect())
        .collect()
}

/// Domains matching [`index_grid`].
pub fn index_domains(dims: &[usize]) -> Vec<CoordMap> {
    dims.iter().map(|&d| CoordMap::for_extent(d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiple::multiple_product;
    use crate::seeded_rng;
    use alloc::vec;

    fn small_model(ranks: &[usize], seed: u64) -> ImtdModel {
        let mut rng = seeded_rng(seed);
        let template = MlpConfig {
            depth: 3,
            width: 8,
            out_dim: 1,
            omega0: 5.0,
        };
        let domains = vec![CoordMap::new(-1.0, 1.0).unwrap(); ranks.len()];
        ImtdModel::init(ranks, domains, &template, &mut rng).unwrap()
    }

    #[test]
    fn zero_networks_give_zero() {
        let ranks = [2, 2, 2];
        let nets = (0..3)
            .map(|n| Mlp::zeros(&MlpConfig::new(slice_len(&ranks, n))).unwrap())
            .collect();
        let m = ImtdModel::new(&ranks, nets, vec![CoordMap::new(0.0, 1.0).unwrap(); 3]).unwrap();
        assert_eq!(m.eval_point(&[0.2, 0.5, 0.9]).unwrap(), 0.0);
        assert_eq!(m.empirical_lipschitz(100, 1).unwrap(), 0.0);
    }

    #[test]
    fn rank_one_is_a_product_of_scalars() {
        let m = small_model(&[1, 1, 1], 3);
        let x = [0.1, -0.4, 0.7];
        let want: f64 = (0..3)
            .map(|n| m.nets()[n].forward(m.domains()[n].to_net(x[n])).unwrap().0[0])
            .product();
        assert!((m.eval_point(&x).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn grid_matches_points() {
        let m = small_model(&[2, 3, 2], 4);
        let coords = vec![
            vec![-1.0, -0.2, 0.3, 1.0],
            vec![-0.5, 0.0, 0.25, 0.8],
            vec![-0.9, -0.1, 0.6, 0.95],
        ];
        let grid = m.eval_grid(&coords).unwrap();
        for l in 0..grid.numel() {
            let idx = grid.unravel(l);
            let x: Vec<f64> = idx.iter().enumerate().map(|(n, &i)| coords[n][i]).collect();
            assert!((grid.data()[l] - m.eval_point(&x).unwrap()).abs() <= 1e-12);
        }
        let single: Vec<Vec<f64>> = coords.iter().map(|c| vec![c[1]]).collect();
        let one = m.eval_grid(&single).unwrap();
        assert_eq!(one.shape(), &[1, 1, 1]);
        assert!((one.data()[0] - grid[&[1, 1, 1][..]]).abs() < 1e-12);
    }

    #[test]
    fn grid_factors_form_a_decomposition() {
        let m = small_model(&[2, 2, 3], 5);
        let coords = vec![vec![0.1, 0.2], vec![0.3, 0.4, 0.5], vec![0.6]];
        let f = m.factors_on_grid(&coords).unwrap();
        assert_eq!(f.ranks(), &[2, 2, 3]);
        let d = multiple_product(&f).max_abs_diff(&m.eval_grid(&coords).unwrap()).unwrap();
        assert!(d < 1e-14);
    }

    #[test]
    fn rank_one_grid_gradient_by_hand() {
        let m = small_model(&[1, 1, 1], 6);
        let coords = vec![vec![0.1, 0.5], vec![-0.3, 0.2, 0.9], vec![0.4, -0.6]];
        let mut rng = seeded_rng(7);
        let g = DenseTensor::from_fn(&[2, 3, 2], |_| rng.gen_range(-1.0..1.0));
        let out = |n: usize, x: f64| m.nets()[n].forward(m.domains()[n].to_net(x)).unwrap().0[0];
        // d<G, X>/d net1(x_i) = sum_jk G[i,j,k] net2(y_j) net3(z_k)
        let d_out: Vec<f64> = (0..2)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..3 {
                    for k in 0..2 {
                        s += g[&[i, j, k][..]] * out(1, coords[1][j]) * out(2, coords[2][k]);
                    }
                }
                s
            })
            .collect();
        let xs: Vec<f64> = coords[0].iter().map(|&x| m.domains()[0].to_net(x)).collect();
        let (_, cache) = m.nets()[0].forward_batch(&xs).unwrap();
        let want = m.nets()[0]
            .backward(&cache, &Matrix::new(2, 1, d_out).unwrap())
            .unwrap();
        let got = m.grid_backward(&coords, &g).unwrap();
        for (a, b) in got.nets[0].weights.iter().zip(&want.weights) {
            assert!(a.max_abs_diff(b).unwrap() < 1e-12);
        }
        let zero = m.grid_backward(&coords, &DenseTensor::zeros(&[2, 3, 2])).unwrap();
        assert!(zero.flatten().iter().all(|&v| v == 0.0));
        assert!(m.grid_backward(&coords, &DenseTensor::zeros(&[2, 3, 1])).is_err());
    }

    #[test]
    fn lipschitz_scales_with_last_layer() {
        let m = small_model(&[2, 2, 2], 8);
        let base = m.empirical_lipschitz(500, 3).unwrap();
        let mut scaled = m.clone();
        let last = scaled.nets()[1].depth() - 1;
        let w = scaled.nets()[1].weights()[last].scale(-3.0);
        scaled.nets_mut()[1].weights_mut()[last] = w;
        let ratio = scaled.empirical_lipschitz(500, 3).unwrap() / base;
        assert!((ratio - 3.0).abs() < 1e-9);
        assert!(base <= m.certificate().unwrap().delta);
    }

    #[test]
    fn params_roundtrip() {
        let mut m = small_model(&[2, 2, 2], 9);
        let p = m.params();
        assert_eq!(p.len(), m.param_count());
        let doubled: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
        m.set_params(&doubled).unwrap();
        assert_eq!(m.params(), doubled);
        assert!(m.set_params(&p[1..]).is_err());
    }
}
