//! Point clouds as text: one point per line, 2 or 3 whitespace-separated
//! coordinates. Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mtensor_core::pcu::PointCloud;

use crate::{io_err, malformed, Result};

pub fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud> {
    let mut dim = None;
    let mut coords = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let before = coords.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| malformed(path, format!("line {}: bad number {:?}", lineno + 1, tok)))?;
            coords.push(v);
        }
        let n = coords.len() - before;
        match dim {
            None if n == 2 || n == 3 => dim = Some(n),
            None => return Err(malformed(path, format!("line {}: {} columns, expected 2 or 3", lineno + 1, n))),
            Some(d) if d != n => {
                return Err(malformed(path, format!("line {}: {} columns, earlier lines have {}", lineno + 1, n, d)))
            }
            Some(_) => {}
        }
    }
    let dim = dim.ok_or_else(|| malformed(path, "no points"))?;
    PointCloud::new(dim, coords).map_err(|e| malformed(path, e.to_string()))
}

pub fn load_xyz(path: &Path) -> Result<PointCloud> {
    parse_xyz(&fs::read_to_string(path).map_err(io_err(path))?, path)
}

pub fn format_xyz(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 16 * cloud.dim());
    for p in cloud.iter() {
        for (k, v) in p.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            write!(out, "{}", v).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn save_xyz(path: &Path, cloud: &PointCloud) -> Result<()> {
    fs::write(path, format_xyz(cloud)).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let cloud = PointCloud::new(3, vec![0.1, -2.5e-7, 3.0, 1.0 / 3.0, 0.0, -1.0]).unwrap();
        let back = parse_xyz(&format_xyz(&cloud), Path::new("t")).unwrap();
        assert_eq!(back, cloud);
    }

    #[test]
    fn skips_comments_and_rejects_ragged_rows() {
        let p = Path::new("t");
        let c = parse_xyz("# header\n\n0 1\n2 3\n", p).unwrap();
        assert_eq!((c.dim(), c.len()), (2, 2));
        assert!(parse_xyz("0 1\n2 3 4\n", p).is_err());
        assert!(parse_xyz("0 1 2 3\n", p).is_err());
        assert!(parse_xyz("0 x\n", p).is_err());
        assert!(parse_xyz("# nothing\n", p).is_err());
    }
}
