//! Point-cloud upsampling with an implicit signed distance function.
//!
//! The SDF `s` is an [`ImtdModel`] with one network per spatial axis, trained
//! on the normalized sparse cloud with
//!
//! ```text
//! sum_{x in Omega} |s(x)| + lambda * mean_v ||grad s(v)|^2 - 1| + gamma * mean_w exp(-|s(w)|)
//! ```
//!
//! where `v` is uniform in the box and `w` is uniform outside a small ball
//! around every observed point. `grad s` is a central finite difference and
//! `|.|` is Charbonnier-smoothed. Dense points are candidates with
//! `|s| < tau`.
//!
//! Planar clouds are lifted to three coordinates with the third fixed at 0:
//! with only two factors the product collapses to `f(x) g(y)`, which cannot
//! describe a closed curve.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{bail, Result};
use crate::imtd::{CoordMap, ImtdModel};
use crate::math;
use crate::multiple::pcu_rank_bound;
use crate::neural::{AdamConfig, AdamState, MlpConfig};
use crate::{seeded_rng, Rng};

/// Smoothing of every absolute value in the loss.
pub const ABS_EPS: f64 = 1e-6;

/// Normalized clouds fill this fraction of `[-1, 1]` along their widest axis.
pub const FILL: f64 = 0.8;

/// Points of dimension 2 or 3, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    points: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            bail!(InvalidArgument, "point dimension must be 2 or 3, got {}", dim);
        }
        if points.len() % dim != 0 {
            bail!(ShapeMismatch, "{} coordinates is not a whole number of {}-d points", points.len(), dim);
        }
        if points.iter().any(|v| !v.is_finite()) {
            bail!(NonFinite, "point coordinates");
        }
        Ok(Self { dim, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.points
    }

    pub fn map(&self, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let mut points = vec![0.0; self.points.len()];
        for (src, dst) in self.points.chunks_exact(self.dim).zip(points.chunks_exact_mut(self.dim)) {
            f(src, dst);
        }
        Self { dim: self.dim, points }
    }

    /// Random subset of `round(sr * len)` points (at least one).
    pub fn subsample(&self, sr: f64, seed: u64) -> Result<Self> {
        if !(sr > 0.0 && sr <= 1.0) {
            bail!(InvalidArgument, "sampling rate must be in (0, 1], got {}", sr);
        }
        let keep = (math::round(sr * self.len() as f64) as usize).clamp(1, self.len());
        let mut rng = seeded_rng(seed);
        let mut idx = rand::seq::index::sample(&mut rng, self.len(), keep).into_vec();
        idx.sort_unstable();
        let mut points = Vec::with_capacity(keep * self.dim);
        for i in idx {
            points.extend_from_slice(self.point(i));
        }
        Self::new(self.dim, points)
    }
}

/// `n` evenly spaced points on the circle of the given radius about the origin.
pub fn circle(n: usize, radius: f64) -> PointCloud {
    let mut points = Vec::with_capacity(2 * n);
    for k in 0..n {
        let t = 2.0 * core::f64::consts::PI * k as f64 / n as f64;
        points.push(radius * math::cos(t));
        points.push(radius * math::sin(t));
    }
    PointCloud { dim: 2, points }
}

/// Affine map `x -> (x - center) / scale` into the unit box.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub center: Vec<f64>,
    pub scale: f64,
}

impl Normalization {
    /// Centers the bounding box and scales its widest half-extent to [`FILL`].
    pub fn fit(cloud: &PointCloud) -> Result<Self> {
        if cloud.is_empty() {
            bail!(EmptyResult, "cannot normalize an empty cloud");
        }
        let d = cloud.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for p in cloud.iter() {
            for j in 0..d {
                lo[j] = lo[j].min(p[j]);
                hi[j] = hi[j].max(p[j]);
            }
        }
        let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let half = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (b - a)).fold(0.0, f64::max);
        let scale = if half > 0.0 { half / FILL } else { 1.0 };
        Ok(Self { center, scale })
    }

    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        cloud.map(|src, dst| {
            for j in 0..src.len() {
                dst[j] = (src[j] - self.center[j]) / self.scale;
            }
        })
    }

    pub fn invert(&self, cloud: &PointCloud) -> PointCloud {
        cloud.map(|src, dst| {
            for j in 0..src.len() {
                dst[j] = src[j] * self.scale + self.center[j];
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcuConfig {
    /// Eikonal weight.
    pub lambda: f64,
    /// Exterior weight.
    pub gamma: f64,
    /// Extraction threshold on `|s|`.
    pub tau: f64,
    pub n_eikonal: usize,
    pub n_exterior: usize,
    /// Finite-difference step of the gradient stencil.
    pub fd_step: f64,
    /// Exterior samples keep at least this distance to every observed point.
    pub r_excl: f64,
    pub candidates: usize,
    pub iters: usize,
    pub adam: AdamConfig,
    /// `None` picks the uniform rank from the point count.
    pub ranks: Option<Vec<usize>>,
    pub net: MlpConfig,
    pub seed: u64,
}

impl Default for PcuConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            gamma: 3.0,
            tau: 0.02,
            n_eikonal: 256,
            n_exterior: 256,
            fd_step: 1e-3,
            r_excl: 0.05,
            candidates: 100_000,
            iters: 1500,
            adam: AdamConfig::default(),
            ranks: None,
            // With the factor-network default of 5 the SDF collapses to s = 0
            // on the circle fixture.
            net: MlpConfig {
                width: 32,
                omega0: 2.0,
                ..MlpConfig::new(1)
            },
            seed: 0,
        }
    }
}

impl PcuConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !(self.fd_step > 0.0) {
            bail!(InvalidArgument, "tau and fd_step must be positive");
        }
        if self.n_eikonal == 0 || self.n_exterior == 0 || self.candidates == 0 {
            bail!(InvalidArgument, "sample counts must be at least 1");
        }
        if !(self.lambda >= 0.0 && self.gamma >= 0.0 && self.r_excl >= 0.0) {
            bail!(InvalidArgument, "loss weights and exclusion radius must be nonnegative");
        }
        Ok(())
    }

    /// Explicit ranks, or `pcu_rank_bound(points)` clamped to `[4, 16]` on
    /// every axis.
    pub fn resolve_ranks(&self, num_points: usize) -> Vec<usize> {
        self.ranks
            .clone()
            .unwrap_or_else(|| vec![pcu_rank_bound(num_points).clamp(4, 16); 3])
    }
}

/// Untrained SDF on the normalized box; planar clouds still get three axes.
pub fn init_sdf(ranks: &[usize], net: &MlpConfig, rng: &mut Rng) -> Result<ImtdModel> {
    if ranks.len() != 3 {
        bail!(InvalidArgument, "an SDF has three axes, got {} ranks", ranks.len());
    }
    let box_ = CoordMap::new(-1.0, 1.0)?;
    ImtdModel::init(ranks, vec![box_; 3], net, rng)
}

/// Appends the constant third coordinate to planar points.
fn lift(dim: usize, pts: &[f64]) -> Vec<f64> {
    if dim == 3 {
        return pts.to_vec();
    }
    let mut out = Vec::with_capacity(pts.len() / 2 * 3);
    for p in pts.chunks_exact(2) {
        out.extend_from_slice(&[p[0], p[1], 0.0]);
    }
    out
}

/// `s` at points of the cloud's dimension.
pub fn sdf_values(model: &ImtdModel, dim: usize, pts: &[f64]) -> Result<Vec<f64>> {
    model.eval_points(&lift(dim, pts))
}

fn uniform_box(dim: usize, n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n * dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

fn near_any(cloud: &PointCloud, p: &[f64], r: f64) -> bool {
    let r2 = r * r;
    cloud.iter().any(|q| dist_sq(p, q) < r2)
}

/// Monte Carlo samples for one loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PcuSamples {
    pub eikonal: Vec<f64>,
    pub exterior: Vec<f64>,
}

/// Uniform Eikonal samples and exterior samples away from `cloud`
/// (normalized coordinates).
pub fn draw_samples(cloud: &PointCloud, cfg: &PcuConfig, rng: &mut Rng) -> Result<PcuSamples> {
    let d = cloud.dim();
    let eikonal = uniform_box(d, cfg.n_eikonal, rng);
    let mut exterior = Vec::with_capacity(cfg.n_exterior * d);
    let mut p = vec![0.0; d];
    let max_tries = 1000 * cfg.n_exterior;
    let mut tries = 0;
    while exterior.len() < cfg.n_exterior * d {
        tries += 1;
        if tries > max_tries {
            bail!(
                InvalidArgument,
                "exclusion radius {} leaves no room for exterior samples",
                cfg.r_excl
            );
        }
        for v in &mut p {
            *v = rng.gen_range(-1.0..=1.0);
        }
        if !near_any(cloud, &p, cfg.r_excl) {
            exterior.extend_from_slice(&p);
        }
    }
    Ok(PcuSamples { eikonal, exterior })
}

/// The three loss terms, already weighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdfLossTerms {
    pub data: f64,
    pub eikonal: f64,
    pub exterior: f64,
}

impl SdfLossTerms {
    pub fn total(&self) -> f64 {
        self.data + self.eikonal + self.exterior
    }
}

/// Loss value and its gradient with respect to every model parameter, for a
/// normalized cloud and a fixed sample draw.
pub fn sdf_loss(
    model: &ImtdModel,
    cloud: &PointCloud,
    samples: &PcuSamples,
    cfg: &PcuConfig,
) -> Result<(SdfLossTerms, Vec<f64>)> {
    let d = cloud.dim();
    let n_data = cloud.len();
    let n_eik = samples.eikonal.len() / d;
    let n_ext = samples.exterior.len() / d;
    let h = cfg.fd_step;

    // Layout: observed points, then for each Eikonal sample 2*d stencil
    // points (+h e_j, -h e_j for each axis), then exterior samples.
    let mut pts = Vec::with_capacity((n_data + 2 * d * n_eik + n_ext) * d);
    pts.extend_from_slice(cloud.coords());
    for v in samples.eikonal.chunks_exact(d) {
        for j in 0..d {
            for sign in [1.0, -1.0] {
                let start = pts.len();
                pts.extend_from_slice(v);
                pts[start + j] += sign * h;
            }
        }
    }
    pts.extend_from_slice(&samples.exterior);

    let (s, cache) = model.eval_points_cached(&lift(d, &pts))?;
    let mut ct = vec![0.0; s.len()];

    let mut data = 0.0;
    for b in 0..n_data {
        data += math::charbonnier(s[b], ABS_EPS);
        ct[b] = math::charbonnier_grad(s[b], ABS_EPS);
    }

    let mut eikonal = 0.0;
    let w_eik = cfg.lambda / n_eik.max(1) as f64;
    let mut g = vec![0.0; d];
    for k in 0..n_eik {
        let base = n_data + 2 * d * k;
        for j in 0..d {
            g[j] = (s[base + 2 * j] - s[base + 2 * j + 1]) / (2.0 * h);
        }
        let q: f64 = g.iter().map(|v| v * v).sum::<f64>() - 1.0;
        eikonal += w_eik * math::charbonnier(q, ABS_EPS);
        let dq = w_eik * math::charbonnier_grad(q, ABS_EPS);
        for j in 0..d {
            let c = dq * 2.0 * g[j] / (2.0 * h);
            ct[base + 2 * j] += c;
            ct[base + 2 * j + 1] -= c;
        }
    }

    let mut exterior = 0.0;
    let w_ext = cfg.gamma / n_ext.max(1) as f64;
    let ext0 = n_data + 2 * d * n_eik;
    for b in ext0..ext0 + n_ext {
        let t = math::exp(-math::charbonnier(s[b], ABS_EPS));
        exterior += w_ext * t;
        ct[b] = -w_ext * t * math::charbonnier_grad(s[b], ABS_EPS);
    }

    let terms = SdfLossTerms {
        data,
        eikonal,
        exterior,
    };
    if !terms.total().is_finite() {
        bail!(NonFinite, "sdf loss");
    }
    let grad = model.points_backward(&cache, &ct)?.flatten();
    Ok((terms, grad))
}

/// Adam on [`sdf_loss`] with fresh samples every iteration. Returns the model
/// and the loss per iteration.
pub fn train_sdf(cloud: &PointCloud, cfg: &PcuConfig) -> Result<(ImtdModel, Vec<f64>)> {
    cfg.validate()?;
    if cloud.is_empty() {
        bail!(EmptyResult, "cannot train on an empty cloud");
    }
    let mut rng = seeded_rng(cfg.seed);
    let ranks = cfg.resolve_ranks(cloud.len());
    let mut model = init_sdf(&ranks, &cfg.net, &mut rng)?;
    let mut params = model.params();
    let mut adam = AdamState::new(cfg.adam, params.len());
    let mut losses = Vec::with_capacity(cfg.iters);
    for it in 0..cfg.iters {
        let samples = draw_samples(cloud, cfg, &mut rng)?;
        let (terms, grad) = sdf_loss(&model, cloud, &samples, cfg)?;
        losses.push(terms.total());
        if it % 100 == 0 {
            log::debug!(
                "sdf {}: data={:.4e} eikonal={:.4e} exterior={:.4e}",
                it,
                terms.data,
                terms.eikonal,
                terms.exterior
            );
        }
        adam.step(&mut params, &grad)?;
        model.set_params(&params)?;
    }
    Ok((model, losses))
}

/// Uniform candidates in the normalized box with `|s| < tau`.
pub fn extract_points(model: &ImtdModel, dim: usize, cfg: &PcuConfig, rng: &mut Rng) -> Result<PointCloud> {
    if !(cfg.tau > 0.0) {
        bail!(EmptyResult, "tau = {} keeps no candidates; use a larger tau", cfg.tau);
    }
    const CHUNK: usize = 4096;
    let mut kept = Vec::new();
    let mut left = cfg.candidates;
    while left > 0 {
        let n = left.min(CHUNK);
        left -= n;
        let cand = uniform_box(dim, n, rng);
        let s = sdf_values(model, dim, &cand)?;
        for (p, v) in cand.chunks_exact(dim).zip(s) {
            if v.abs() < cfg.tau {
                kept.extend_from_slice(p);
            }
        }
    }
    if kept.is_empty() {
        bail!(
            EmptyResult,
            "no candidate has |s| < {}; use a larger tau or more candidates",
            cfg.tau
        );
    }
    PointCloud::new(dim, kept)
}

#[derive(Debug, Clone)]
pub struct PcuOutcome {
    /// Upsampled cloud in the input's coordinates.
    pub dense: PointCloud,
    pub model: ImtdModel,
    pub normalization: Normalization,
    pub losses: Vec<f64>,
}

/// Normalize, train, extract, de-normalize.
pub fn upsample(sparse: &PointCloud, cfg: &PcuConfig) -> Result<PcuOutcome> {
    let normalization = Normalization::fit(sparse)?;
    let local = normalization.apply(sparse);
    let (model, losses) = train_sdf(&local, cfg)?;
    let mut rng = seeded_rng(cfg.seed ^ 0xe7_7ac7);
    let dense = normalization.invert(&extract_points(&model, sparse.dim(), cfg, &mut rng)?);
    Ok(PcuOutcome {
        dense,
        model,
        normalization,
        losses,
    })
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_pair(p: &PointCloud, q: &PointCloud) -> Result<()> {
    if p.is_empty() || q.is_empty() {
        bail!(EmptyResult, "point cloud is empty");
    }
    if p.dim() != q.dim() {
        bail!(ShapeMismatch, "clouds of dimension {} and {}", p.dim(), q.dim());
    }
    Ok(())
}

/// Distance from every point of `p` to its nearest neighbour in `q`.
pub fn nearest_distances(p: &PointCloud, q: &PointCloud) -> Vec<f64> {
    p.iter()
        .map(|a| math::sqrt(q.iter().map(|b| dist_sq(a, b)).fold(f64::INFINITY, f64::min)))
        .collect()
}

/// Mean nearest-neighbour distance from `p` to `q` plus from `q` to `p`.
pub fn chamfer(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    check_pair(p, q)?;
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    Ok(mean(nearest_distances(p, q)) + mean(nearest_distances(q, p)))
}

/// Harmonic mean of precision (fraction of `p` within `d` of `q`) and recall
/// (fraction of `q` within `d` of `p`).
pub fn f_score(p: &PointCloud, q: &PointCloud, d: f64) -> Result<f64> {
    check_pair(p, q)?;
    if !(d > 0.0) {
        bail!(InvalidArgument, "distance threshold must be positive, got {}", d);
    }
    let frac = |v: Vec<f64>| v.iter().filter(|&&x| x <= d).count() as f64 / v.len() as f64;
    let precision = frac(nearest_distances(p, q));
    let recall = frac(nearest_distances(q, p));
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Mlp;
    use crate::multiple::slice_len;

    fn cloud2(pts: &[f64]) -> PointCloud {
        PointCloud::new(2, pts.to_vec()).unwrap()
    }

    #[test]
    fn chamfer_and_f_score_by_hand() {
        let a = cloud2(&[0.0, 0.0]);
        let b = cloud2(&[1.0, 0.0]);
        assert_eq!(chamfer(&a, &b).unwrap(), 2.0);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        let p = cloud2(&[0.0, 0.0, 10.0, 0.0]);
        assert!((f_score(&p, &a, 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f_score(&a, &b, 0.5).unwrap(), 0.0);
        assert_eq!(f_score(&p, &p, 0.1).unwrap(), 1.0);
        let empty = PointCloud::new(2, vec![]).unwrap();
        assert!(chamfer(&a, &empty).is_err());
    }

    #[test]
    fn normalization_roundtrip() {
        let c = circle(50, 3.0).map(|s, d| {
            d[0] = s[0] + 7.0;
            d[1] = s[1] - 2.0;
        });
        let n = Normalization::fit(&c).unwrap();
        let local = n.apply(&c);
        let max = local.coords().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((max - FILL).abs() < 1e-12);
        let back = n.invert(&local);
        for (x, y) in back.coords().iter().zip(c.coords()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_model_loss_terms() {
        let ranks = [4, 4, 4];
        let nets = (0..3)
            .map(|n| Mlp::zeros(&MlpConfig::new(slice_len(&ranks, n))).unwrap())
            .collect();
        let model = ImtdModel::new(&ranks, nets, vec![CoordMap::new(-1.0, 1.0).unwrap(); 3]).unwrap();
        let cloud = circle(8, 0.5);
        let cfg = PcuConfig {
            lambda: 0.3,
            gamma: 0.7,
            n_eikonal: 10,
            n_exterior: 10,
            ..PcuConfig::default()
        };
        let samples = draw_samples(&cloud, &cfg, &mut seeded_rng(1)).unwrap();
        let (terms, _) = sdf_loss(&model, &cloud, &samples, &cfg).unwrap();
        assert_eq!(terms.data, 0.0);
        assert!((terms.eikonal - 0.3).abs() < 1e-6);
        assert!((terms.exterior - 0.7).abs() < 1e-12);
    }

    #[test]
    fn exterior_samples_avoid_cloud() {
        let cloud = circle(16, 0.5);
        let cfg = PcuConfig::default();
        let s = draw_samples(&cloud, &cfg, &mut seeded_rng(2)).unwrap();
        for p in s.exterior.chunks_exact(2) {
            assert!(!near_any(&cloud, p, cfg.r_excl));
        }
    }

    #[test]
    fn extraction_thresholds() {
        let mut rng = seeded_rng(3);
        let model = init_sdf(&[4, 4, 4], &PcuConfig::default().net, &mut rng).unwrap();
        let all = PcuConfig {
            tau: f64::INFINITY,
            candidates: 500,
            ..PcuConfig::default()
        };
        assert_eq!(extract_points(&model, 2, &all, &mut rng).unwrap().len(), 500);
        let none = PcuConfig { tau: 0.0, ..all };
        assert!(extract_points(&model, 2, &none, &mut rng).is_err());
    }

    #[test]
    fn auto_ranks() {
        let cfg = PcuConfig::default();
        assert_eq!(cfg.resolve_ranks(32), vec![4, 4, 4]);
        assert_eq!(cfg.resolve_ranks(1000), vec![10, 10, 10]);
        assert_eq!(cfg.resolve_ranks(100_000), vec![16, 16, 16]);
    }
}
