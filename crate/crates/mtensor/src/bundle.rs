//! Directory formats built from a `manifest.json` plus `MTD1` payloads.
//!
//! * factors: `manifest.json` with `order`, `ranks`, `long_dims`, and
//!   `factor_<n>.mtd1` for each mode.
//! * network checkpoint: `manifest.json` with `depth`, `widths` (input size
//!   followed by every layer's output size) and `omega0`, and `layer_<i>.mtd1`
//!   holding each `rows x cols` weight matrix.
//! * IMTD model: `manifest.json` with `ranks`, `domains` and one net config per
//!   mode, and a checkpoint directory `net_<n>/` per mode.

use std::fs;
use std::path::Path;

use mtensor_core::{CoordMap, ImtdModel, Mlp, MultipleFactors};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{io_err, malformed, mtd1, Result};

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct FactorsManifest {
    pub order: usize,
    pub ranks: Vec<usize>,
    pub long_dims: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NetManifest {
    pub depth: usize,
    pub widths: Vec<usize>,
    pub omega0: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct DomainManifest {
    pub lo: f64,
    pub hi: f64,
    pub span: f64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ImtdManifest {
    pub ranks: Vec<usize>,
    pub domains: Vec<DomainManifest>,
    pub nets: Vec<NetManifest>,
}

const MANIFEST: &str = "manifest.json";

fn write_manifest(dir: &Path, value: &impl Serialize) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(value)?).map_err(io_err(&path))
}

fn read_manifest<T: DeserializeOwned>(dir: &Path) -> Result<T> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| malformed(&path, e.to_string()))
}

pub fn save_factors(dir: &Path, f: &MultipleFactors) -> Result<()> {
    write_manifest(
        dir,
        &FactorsManifest {
            order: f.order(),
            ranks: f.ranks().to_vec(),
            long_dims: f.long_dims().to_vec(),
        },
    )?;
    for (n, t) in f.factors().iter().enumerate() {
        mtd1::save(&dir.join(format!("factor_{}.mtd1", n)), t)?;
    }
    Ok(())
}

pub fn load_factors(dir: &Path) -> Result<MultipleFactors> {
    let m: FactorsManifest = read_manifest(dir)?;
    let factors = (0..m.order)
        .map(|n| mtd1::load(&dir.join(format!("factor_{}.mtd1", n))))
        .collect::<Result<Vec<_>>>()?;
    let f = MultipleFactors::new(factors)?;
    if f.ranks() != m.ranks || f.long_dims() != m.long_dims {
        return Err(malformed(&dir.join(MANIFEST), "manifest disagrees with the factor files"));
    }
    Ok(f)
}

pub fn net_manifest(net: &Mlp) -> NetManifest {
    let mut widths = vec![1];
    widths.extend(net.weights().iter().map(|w| w.rows()));
    NetManifest {
        depth: net.depth(),
        widths,
        omega0: net.omega0(),
    }
}

pub fn save_mlp(dir: &Path, net: &Mlp) -> Result<()> {
    write_manifest(dir, &net_manifest(net))?;
    for (i, w) in net.weights().iter().enumerate() {
        mtd1::save(&dir.join(format!("layer_{}.mtd1", i)), &mtd1::matrix_to_tensor(w))?;
    }
    Ok(())
}

pub fn load_mlp(dir: &Path) -> Result<Mlp> {
    let m: NetManifest = read_manifest(dir)?;
    if m.widths.len() != m.depth + 1 {
        return Err(malformed(&dir.join(MANIFEST), "widths must list depth + 1 sizes"));
    }
    let weights = (0..m.depth)
        .map(|i| {
            let path = dir.join(format!("layer_{}.mtd1", i));
            let w = mtd1::tensor_to_matrix(&mtd1::load(&path)?, &path)?;
            if (w.rows(), w.cols()) != (m.widths[i + 1], m.widths[i]) {
                return Err(malformed(&path, "matrix size disagrees with the manifest"));
            }
            Ok(w)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Mlp::new(weights, m.omega0)?)
}

pub fn save_imtd(dir: &Path, model: &ImtdModel) -> Result<()> {
    write_manifest(
        dir,
        &ImtdManifest {
            ranks: model.ranks().to_vec(),
            domains: model
                .domains()
                .iter()
                .map(|d| DomainManifest {
                    lo: d.lo,
                    hi: d.hi,
                    span: d.span,
                })
                .collect(),
            nets: model.nets().iter().map(net_manifest).collect(),
        },
    )?;
    for (n, net) in model.nets().iter().enumerate() {
        save_mlp(&dir.join(format!("net_{}", n)), net)?;
    }
    Ok(())
}

pub fn load_imtd(dir: &Path) -> Result<ImtdModel> {
    let m: ImtdManifest = read_manifest(dir)?;
    let nets = (0..m.ranks.len())
        .map(|n| load_mlp(&dir.join(format!("net_{}", n))))
        .collect::<Result<Vec<_>>>()?;
    if nets.iter().map(net_manifest).collect::<Vec<_>>() != m.nets {
        return Err(malformed(&dir.join(MANIFEST), "net configs disagree with the checkpoints"));
    }
    let domains = m
        .domains
        .iter()
        .map(|d| CoordMap::with_span(d.lo, d.hi, d.span))
        .collect::<mtensor_core::Result<Vec<_>>>()?;
    Ok(ImtdModel::new(&m.ranks, nets, domains)?)
}
