//! Netpbm images (`P2`, `P3`, `P5`, `P6`).
//!
//! An image of height `H` and width `W` becomes an `H x W x C` tensor with
//! `C = 3` for PPM and `C = 1` for PGM, values divided by the file's maxval.
//! Saving quantizes to 8 bits, so any tensor with entries `k / 255` survives a
//! round trip exactly.

use std::fs;
use std::path::Path;

use mtensor_core::DenseTensor;

use crate::{io_err, malformed, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Ascii,
    Binary,
}

pub fn load_image(path: &Path) -> Result<DenseTensor> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode(&bytes, path)
}

pub fn save_image(path: &Path, t: &DenseTensor, encoding: Encoding) -> Result<()> {
    fs::write(path, encode(t, encoding, path)?).map_err(io_err(path))
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&[u8]> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() && self.bytes[self.pos] != b'#' {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str, path: &Path) -> Result<usize> {
        let tok = self.token().ok_or_else(|| malformed(path, format!("missing {}", what)))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed(path, format!("bad {}: {:?}", what, String::from_utf8_lossy(tok))))
    }
}

fn decode(bytes: &[u8], path: &Path) -> Result<DenseTensor> {
    let mut h = Header { bytes, pos: 0 };
    let (channels, binary) = match h.token() {
        Some(b"P2") => (1, false),
        Some(b"P3") => (3, false),
        Some(b"P5") => (1, true),
        Some(b"P6") => (3, true),
        other => {
            return Err(malformed(
                path,
                format!("not a PGM/PPM file (magic {:?})", other.map(String::from_utf8_lossy)),
            ))
        }
    };
    let width = h.number("width", path)?;
    let height = h.number("height", path)?;
    let maxval = h.number("maxval", path)?;
    if width == 0 || height == 0 {
        return Err(malformed(path, "empty image"));
    }
    if !(1..=65535).contains(&maxval) {
        return Err(malformed(path, format!("maxval {} out of range", maxval)));
    }
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| malformed(path, "image size overflows"))?;

    let samples: Vec<usize> = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        if h.pos >= bytes.len() || !bytes[h.pos].is_ascii_whitespace() {
            return Err(malformed(path, "missing raster"));
        }
        let raster = &bytes[h.pos + 1..];
        let width_bytes = if maxval > 255 { 2 } else { 1 };
        if raster.len() < count * width_bytes {
            return Err(malformed(path, format!("raster has {} bytes, need {}", raster.len(), count * width_bytes)));
        }
        if width_bytes == 1 {
            raster[..count].iter().map(|&b| b as usize).collect()
        } else {
            raster[..2 * count]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as usize)
                .collect()
        }
    } else {
        (0..count).map(|_| h.number("sample", path)).collect::<Result<_>>()?
    };
    if let Some(&bad) = samples.iter().find(|&&s| s > maxval) {
        return Err(malformed(path, format!("sample {} exceeds maxval {}", bad, maxval)));
    }

    let scale = maxval as f64;
    Ok(DenseTensor::from_fn(&[height, width, channels], |i| {
        samples[(i[0] * width + i[1]) * channels + i[2]] as f64 / scale
    }))
}

fn encode(t: &DenseTensor, encoding: Encoding, path: &Path) -> Result<Vec<u8>> {
    let (height, width, channels) = match *t.shape() {
        [h, w] => (h, w, 1),
        [h, w, c] if c == 1 || c == 3 => (h, w, c),
        _ => {
            return Err(malformed(
                path,
                format!("cannot write shape {:?} as an image (need H x W x 1 or H x W x 3)", t.shape()),
            ))
        }
    };
    let magic = match (channels, encoding) {
        (1, Encoding::Ascii) => "P2",
        (3, Encoding::Ascii) => "P3",
        (1, Encoding::Binary) => "P5",
        _ => "P6",
    };
    let mut out = format!("{}\n{} {}\n255\n", magic, width, height).into_bytes();
    let data = t.data();
    let (s0, s1) = (1, height);
    for r in 0..height {
        for c in 0..width {
            for k in 0..channels {
                let v = data[r * s0 + c * s1 + k * s1 * width];
                let q = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                match encoding {
                    Encoding::Binary => out.push(q),
                    Encoding::Ascii => {
                        out.extend_from_slice(q.to_string().as_bytes());
                        out.push(if k + 1 == channels && c + 1 == width { b'\n' } else { b' ' });
                    }
                }
            }
        }
    }
    Ok(out)
}
