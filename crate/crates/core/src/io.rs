//! Binary cube and factor containers, trace CSV export and atomic writes.
//!
//! All integers and floats are little-endian regardless of host.
//!
//! Cube file: `"LL1C"`, `u32` version, `I`, `J`, `K` as `u64`, then `IJK`
//! `f64` values at index `k*IJ + i + j*I`.
//!
//! Factor file: `"LL1F"`, `u32` version, `u32` kind, then for kind 1
//! (endmembers) `K`, `R` and for kind 2 (abundances) `R`, `I`, `J` as `u64`,
//! followed by the matrix in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use faer::Mat;

use crate::error::{Error, Result};
use crate::model::{AbundanceMatrix, EndmemberMatrix, HsiCube};
use crate::solver::RunTrace;

pub const CUBE_MAGIC: &[u8; 4] = b"LL1C";
pub const FACTOR_MAGIC: &[u8; 4] = b"LL1F";
pub const FORMAT_VERSION: u32 = 1;
pub const KIND_ENDMEMBERS: u32 = 1;
pub const KIND_ABUNDANCES: u32 = 2;

pub const TRACE_HEADER: [&str; 11] = [
    "iter",
    "time_s",
    "objective",
    "rel_fit",
    "alpha",
    "beta",
    "ap_iters",
    "sto_violation_max",
    "lr_energy_avg",
    "delta_c",
    "delta_s",
];

/// A decoded factor file.
#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Endmembers(EndmemberMatrix),
    Abundances(AbundanceMatrix),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Format(format!("truncated: need {n} bytes at offset {}", self.pos))
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn dim(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Format(format!("dimension {v} too large")))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(Error::Format(format!("bad magic, expected {}", String::from_utf8_lossy(magic))));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        Ok(())
    }

    /// Reads `n` floats and requires the buffer to end right after them.
    fn payload(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n.checked_mul(8).ok_or_else(|| Error::Format("payload size overflows".into()))?;
        if self.buf.len() - self.pos != bytes {
            return Err(Error::Format(format!(
                "payload has {} bytes, header implies {bytes}",
                self.buf.len() - self.pos
            )));
        }
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn product(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("dimensions overflow".into()))
}

fn put_header(out: &mut Vec<u8>, magic: &[u8; 4]) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
}

fn put_dims(out: &mut Vec<u8>, dims: &[usize]) {
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
}

fn put_row_major(out: &mut Vec<u8>, m: &Mat<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Mat<f64> {
    Mat::from_fn(rows, cols, |i, j| data[i * cols + j])
}

pub fn encode_cube(cube: &HsiCube) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 8 * cube.pixels() * cube.bands());
    put_header(&mut out, CUBE_MAGIC);
    put_dims(&mut out, &[cube.rows(), cube.cols(), cube.bands()]);
    put_row_major(&mut out, cube.matrix());
    out
}

pub fn decode_cube(bytes: &[u8]) -> Result<HsiCube> {
    let mut rd = Reader { buf: bytes, pos: 0 };
    rd.header(CUBE_MAGIC)?;
    let (i, j, k) = (rd.dim()?, rd.dim()?, rd.dim()?);
    if i == 0 || j == 0 || k == 0 {
        return Err(Error::Format(format!("empty cube {i}x{j}x{k}")));
    }
    let data = rd.payload(product(&[i, j, k])?)?;
    HsiCube::from_matrix(i, j, from_row_major(k, i * j, &data))
}

pub fn encode_endmembers(c: &EndmemberMatrix) -> Vec<u8> {
    let mut out = Vec::new();
    put_header(&mut out, FACTOR_MAGIC);
    out.extend_from_slice(&KIND_ENDMEMBERS.to_le_bytes());
    put_dims(&mut out, &[c.bands(), c.endmembers()]);
    put_row_major(&mut out, c.matrix());
    out
}

pub fn encode_abundances(s: &AbundanceMatrix) -> Vec<u8> {
    let mut out = Vec::new();
    put_header(&mut out, FACTOR_MAGIC);
    out.extend_from_slice(&KIND_ABUNDANCES.to_le_bytes());
    put_dims(&mut out, &[s.endmembers(), s.rows(), s.cols()]);
    put_row_major(&mut out, s.matrix());
    out
}

pub fn decode_factor(bytes: &[u8]) -> Result<Factor> {
    let mut rd = Reader { buf: bytes, pos: 0 };
    rd.header(FACTOR_MAGIC)?;
    match rd.u32()? {
        KIND_ENDMEMBERS => {
            let (k, r) = (rd.dim()?, rd.dim()?);
            let data = rd.payload(product(&[k, r])?)?;
            Ok(Factor::Endmembers(EndmemberMatrix::new(from_row_major(k, r, &data))?))
        }
        KIND_ABUNDANCES => {
            let (r, i, j) = (rd.dim()?, rd.dim()?, rd.dim()?);
            let data = rd.payload(product(&[r, i, j])?)?;
            Ok(Factor::Abundances(AbundanceMatrix::new(i, j, from_row_major(r, i * j, &data))?))
        }
        other => Err(Error::Format(format!("unknown factor kind {other}"))),
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_cube(path: &Path, cube: &HsiCube) -> Result<()> {
    write_atomic(path, &encode_cube(cube))
}

pub fn read_cube(path: &Path) -> Result<HsiCube> {
    decode_cube(&fs::read(path)?)
}

pub fn write_endmembers(path: &Path, c: &EndmemberMatrix) -> Result<()> {
    write_atomic(path, &encode_endmembers(c))
}

pub fn write_abundances(path: &Path, s: &AbundanceMatrix) -> Result<()> {
    write_atomic(path, &encode_abundances(s))
}

pub fn read_endmembers(path: &Path) -> Result<EndmemberMatrix> {
    match decode_factor(&fs::read(path)?)? {
        Factor::Endmembers(c) => Ok(c),
        Factor::Abundances(_) => Err(Error::Format(format!("{} holds abundances", path.display()))),
    }
}

pub fn read_abundances(path: &Path) -> Result<AbundanceMatrix> {
    match decode_factor(&fs::read(path)?)? {
        Factor::Abundances(s) => Ok(s),
        Factor::Endmembers(_) => Err(Error::Format(format!("{} holds endmembers", path.display()))),
    }
}

/// Renders the trace as CSV with [`TRACE_HEADER`]. Floats use Rust's shortest
/// round-trip formatting.
pub fn encode_trace_csv(trace: &RunTrace) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Format(format!("csv: {e}"));
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for r in &trace.records {
        w.write_record([
            r.iter.to_string(),
            r.time_s.to_string(),
            r.objective.to_string(),
            r.rel_fit.to_string(),
            r.alpha.to_string(),
            r.beta.to_string(),
            r.ap_iters.to_string(),
            r.sto_violation_max.to_string(),
            r.lr_energy_avg.to_string(),
            r.delta_c.to_string(),
            r.delta_s.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))
}

pub fn write_trace_csv(path: &Path, trace: &RunTrace) -> Result<()> {
    write_atomic(path, &encode_trace_csv(trace)?)
}
