//! `MTD1` container: magic `MTD1`, little-endian `u32` order, that many
//! little-endian `u64` extents, then the entries as little-endian `f64` in
//! first-index-fastest order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use mtensor_core::{DenseTensor, Matrix};

use crate::{io_err, malformed, Result};

pub const MAGIC: &[u8; 4] = b"MTD1";

/// Reads are done in chunks so a corrupt header cannot force a huge allocation
/// before the data runs out.
const CHUNK: usize = 1 << 16;

pub fn write_to(w: &mut impl Write, t: &DenseTensor) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(t.order() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_from(r: &mut impl Read, path: &Path) -> Result<DenseTensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err(path))?;
    if &magic != MAGIC {
        return Err(malformed(path, format!("bad magic {:?}", magic)));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(io_err(path))?;
    let order = u32::from_le_bytes(b4) as usize;
    if order > 64 {
        return Err(malformed(path, format!("order {} is implausible", order)));
    }
    let mut shape = Vec::with_capacity(order);
    let mut numel: usize = 1;
    for _ in 0..order {
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(io_err(path))?;
        let d = usize::try_from(u64::from_le_bytes(b8)).map_err(|_| malformed(path, "extent overflows usize"))?;
        numel = numel
            .checked_mul(d)
            .filter(|n| n.checked_mul(8).is_some())
            .ok_or_else(|| malformed(path, "tensor size overflows"))?;
        shape.push(d);
    }
    let mut data = Vec::with_capacity(numel.min(CHUNK));
    let mut buf = vec![0u8; 8 * CHUNK];
    while data.len() < numel {
        let take = (numel - data.len()).min(CHUNK);
        let bytes = &mut buf[..8 * take];
        r.read_exact(bytes).map_err(io_err(path))?;
        data.extend(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())));
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe).map_err(io_err(path))? != 0 {
        return Err(malformed(path, "trailing bytes after tensor data"));
    }
    Ok(DenseTensor::new(&shape, data)?)
}

pub fn save(path: &Path, t: &DenseTensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    write_to(&mut w, t).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn load(path: &Path) -> Result<DenseTensor> {
    let mut r = BufReader::new(File::open(path).map_err(io_err(path))?);
    read_from(&mut r, path)
}

/// A matrix stored as a `rows x cols` tensor.
pub fn matrix_to_tensor(m: &Matrix) -> DenseTensor {
    DenseTensor::from_fn(&[m.rows(), m.cols()], |i| m[(i[0], i[1])])
}

pub fn tensor_to_matrix(t: &DenseTensor, path: &Path) -> Result<Matrix> {
    match *t.shape() {
        [rows, cols] => Ok(Matrix::from_fn(rows, cols, |r, c| t[&[r, c][..]])),
        _ => Err(malformed(path, format!("expected a matrix, got shape {:?}", t.shape()))),
    }
}
