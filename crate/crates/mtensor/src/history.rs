//! Solver history as JSON lines, one object per outer iteration with keys
//! `iteration`, `G`, `V`, `a_k`, `e_k`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use mtensor_core::IterationRecord;
use serde::{Deserialize, Serialize};

use crate::{io_err, malformed, Result};

#[derive(Serialize, Deserialize)]
struct Line {
    iteration: usize,
    #[serde(rename = "G")]
    g: f64,
    #[serde(rename = "V")]
    v: f64,
    a_k: f64,
    e_k: f64,
}

pub fn write_history(w: &mut impl Write, history: &[IterationRecord]) -> Result<()> {
    for r in history {
        let line = Line {
            iteration: r.iteration,
            g: r.g,
            v: r.v,
            a_k: r.a_k,
            e_k: r.e_k,
        };
        serde_json::to_writer(&mut *w, &line)?;
        w.write_all(b"\n").map_err(|e| serde_json::Error::io(e))?;
    }
    Ok(())
}

pub fn save_history(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    write_history(&mut w, history)?;
    w.flush().map_err(io_err(path))
}

pub fn load_history(path: &Path) -> Result<Vec<IterationRecord>> {
    let r = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let l: Line = serde_json::from_str(&line).map_err(|e| malformed(path, format!("line {}: {}", lineno + 1, e)))?;
        out.push(IterationRecord {
            iteration: l.iteration,
            g: l.g,
            v: l.v,
            a_k: l.a_k,
            e_k: l.e_k,
        });
    }
    Ok(out)
}
