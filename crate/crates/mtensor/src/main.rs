use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use mtensor::image::{load_image, save_image, Encoding};
use mtensor::{bundle, history, mtd1, xyz};
use mtensor_core::pcu::{chamfer, f_score, upsample, PcuConfig};
use mtensor_core::rtc::{corrupt, default_config, default_ranks, rtc_recover, RtcProblem, PEAK};
use mtensor_core::tensor::psnr;
use mtensor_core::{DenseTensor, Error};
use serde_json::json;

/// Exit status when the solver reports divergence.
const EXIT_DIVERGED: u8 = 2;

#[derive(Parser)]
#[command(name = "mtensor", version, about = "Tensor completion and point-cloud upsampling with neural multiple-tensor factors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corrupt a clean tensor or image, then recover it.
    Rtc(RtcArgs),
    /// Upsample a sparse 2-D or 3-D point cloud.
    Pcu(PcuArgs),
}

#[derive(Args)]
struct RtcArgs {
    /// Clean input: .ppm, .pgm or .mtd1.
    #[arg(long)]
    input: PathBuf,
    /// Fraction of entries kept.
    #[arg(long, default_value_t = 0.4)]
    sr: f64,
    /// Fraction of kept entries replaced by salt-and-pepper noise.
    #[arg(long, default_value_t = 0.2)]
    sigma: f64,
    /// Comma-separated ranks, or `auto`.
    #[arg(long, default_value = "auto")]
    ranks: String,
    /// TV weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Sparse-noise weight: a number, `auto`, or `inf` to disable the noise block.
    #[arg(long, default_value = "auto")]
    gamma: String,
    /// Proximal weight.
    #[arg(long)]
    eta: Option<f64>,
    /// Outer iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Adam steps per outer iteration.
    #[arg(long)]
    inner: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Relative change of the objective that stops the solver; 0 runs every iteration.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reconstruction: .ppm, .pgm or .mtd1.
    #[arg(long)]
    out: PathBuf,
    /// Corrupted observation, same formats as `--out`.
    #[arg(long)]
    observed: Option<PathBuf>,
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Per-iteration history as JSON lines.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Directory for the trained model bundle.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct PcuArgs {
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated ranks for the three axes, or `auto`.
    #[arg(long, default_value = "auto")]
    ranks: String,
    /// Extraction threshold on |s|.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    candidates: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    /// Eikonal weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Exterior weight.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Dense reference cloud for Chamfer distance and F-score.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// F-score distance threshold.
    #[arg(long, default_value_t = 0.05)]
    f_dist: f64,
    #[arg(long)]
    model: Option<PathBuf>,
}

fn parse_ranks(s: &str, order: usize) -> anyhow::Result<Option<Vec<usize>>> {
    if s == "auto" {
        return Ok(None);
    }
    let ranks = s
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("bad rank list {:?}", s))?;
    if ranks.len() != order || ranks.contains(&0) {
        bail!("need {} positive ranks, got {:?}", order, s);
    }
    Ok(Some(ranks))
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

fn load_tensor(path: &Path) -> anyhow::Result<DenseTensor> {
    Ok(match extension(path).as_str() {
        "ppm" | "pgm" | "pnm" => load_image(path)?,
        "mtd1" => mtd1::load(path)?,
        other => bail!("{}: unknown tensor format {:?}", path.display(), other),
    })
}

fn save_tensor(path: &Path, t: &DenseTensor) -> anyhow::Result<()> {
    match extension(path).as_str() {
        "ppm" | "pgm" | "pnm" => save_image(path, t, Encoding::Binary)?,
        "mtd1" => mtd1::save(path, t)?,
        other => bail!("{}: unknown tensor format {:?}", path.display(), other),
    }
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn run_rtc(a: RtcArgs) -> anyhow::Result<ExitCode> {
    let x = load_tensor(&a.input)?;
    if x.order() < 3 {
        bail!("need a tensor of order at least 3, got shape {:?}", x.shape());
    }
    let (m, mask) = corrupt(&x, a.sr, a.sigma, a.seed)?;
    if let Some(path) = &a.observed {
        save_tensor(path, &m)?;
    }
    let ranks = match parse_ranks(&a.ranks, x.order())? {
        Some(r) => r,
        None => default_ranks(x.shape())?,
    };
    let mut cfg = default_config(&m, a.seed);
    match a.gamma.as_str() {
        "auto" => {}
        "inf" => cfg.gamma = f64::INFINITY,
        g => cfg.gamma = g.parse().with_context(|| format!("bad gamma {:?}", g))?,
    }
    cfg.lambda = a.lambda.unwrap_or(cfg.lambda);
    cfg.eta = a.eta.unwrap_or(cfg.eta);
    cfg.outer_iters = a.iters.unwrap_or(cfg.outer_iters);
    cfg.inner_steps = a.inner.unwrap_or(cfg.inner_steps);
    cfg.adam.lr = a.lr.unwrap_or(cfg.adam.lr);
    cfg.tol = a.tol.unwrap_or(cfg.tol);

    let mut p = RtcProblem::new(m, mask, ranks.clone(), cfg)?;
    p.net.width = a.width.unwrap_or(p.net.width);
    p.net.depth = a.depth.unwrap_or(p.net.depth);
    log::info!(
        "shape {:?}, ranks {:?}, {} of {} entries observed",
        x.shape(),
        ranks,
        p.mask.count(),
        x.numel()
    );

    let start = Instant::now();
    let out = match rtc_recover(&p) {
        Ok(out) => out,
        Err(Error::Diverged { iteration, history: h }) => {
            if let Some(path) = &a.history {
                history::save_history(path, &h)?;
            }
            eprintln!("error: solver diverged at iteration {}", iteration);
            return Ok(ExitCode::from(EXIT_DIVERGED));
        }
        Err(e) => return Err(e.into()),
    };
    let runtime = start.elapsed().as_secs_f64();

    save_tensor(&a.out, &out.x_hat)?;
    if let Some(path) = &a.history {
        history::save_history(path, &out.history)?;
    }
    if let Some(dir) = &a.model {
        bundle::save_imtd(dir, &out.model)?;
    }
    let last = out.history.last().expect("history always holds the initial point");
    let value = psnr(&out.x_hat, &x, PEAK)?;
    log::info!("PSNR {:.2} dB after {} iterations ({:.1} s)", value, last.iteration, runtime);
    if let Some(path) = &a.metrics {
        write_json(
            path,
            &json!({
                "psnr": value,
                "psnr_observed": psnr(&p.mask.apply(&p.m)?, &x, PEAK)?,
                "runtime_s": runtime,
                "final_G": last.g,
                "final_V": last.v,
                "iterations": last.iteration,
                "converged": out.converged,
                "shape": x.shape(),
                "ranks": ranks,
                "sr": a.sr,
                "sigma": a.sigma,
                "lambda": p.config.lambda,
                "gamma": if p.config.gamma.is_finite() { json!(p.config.gamma) } else { json!("inf") },
                "eta": p.config.eta,
                "seed": a.seed,
            }),
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_pcu(a: PcuArgs) -> anyhow::Result<ExitCode> {
    let sparse = xyz::load_xyz(&a.input)?;
    let mut cfg = PcuConfig {
        ranks: parse_ranks(&a.ranks, 3)?,
        seed: a.seed,
        ..PcuConfig::default()
    };
    cfg.tau = a.tau.unwrap_or(cfg.tau);
    cfg.candidates = a.candidates.unwrap_or(cfg.candidates);
    cfg.iters = a.iters.unwrap_or(cfg.iters);
    cfg.lambda = a.lambda.unwrap_or(cfg.lambda);
    cfg.gamma = a.gamma.unwrap_or(cfg.gamma);
    cfg.adam.lr = a.lr.unwrap_or(cfg.adam.lr);
    cfg.net.width = a.width.unwrap_or(cfg.net.width);
    let ranks = cfg.resolve_ranks(sparse.len());
    log::info!("{} points in {} dimensions, ranks {:?}", sparse.len(), sparse.dim(), ranks);

    let start = Instant::now();
    let out = upsample(&sparse, &cfg)?;
    let runtime = start.elapsed().as_secs_f64();
    xyz::save_xyz(&a.out, &out.dense)?;
    if let Some(dir) = &a.model {
        bundle::save_imtd(dir, &out.model)?;
    }
    log::info!("{} points written ({:.1} s)", out.dense.len(), runtime);

    if let Some(path) = &a.metrics {
        let mut metrics = json!({
            "input_points": sparse.len(),
            "output_points": out.dense.len(),
            "runtime_s": runtime,
            "final_loss": out.losses.last(),
            "ranks": ranks,
            "tau": cfg.tau,
            "lambda": cfg.lambda,
            "gamma": cfg.gamma,
            "seed": a.seed,
        });
        if let Some(truth) = &a.truth {
            let truth = xyz::load_xyz(truth)?;
            metrics["chamfer_input"] = json!(chamfer(&sparse, &truth)?);
            metrics["chamfer_output"] = json!(chamfer(&out.dense, &truth)?);
            metrics["f_score_input"] = json!(f_score(&sparse, &truth, a.f_dist)?);
            metrics["f_score_output"] = json!(f_score(&out.dense, &truth, a.f_dist)?);
            metrics["f_dist"] = json!(a.f_dist);
        }
        write_json(path, &metrics)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Rtc(a) => run_rtc(a),
        Command::Pcu(a) => run_pcu(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::FAILURE
        }
    }
}
