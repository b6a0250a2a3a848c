//! `TORW` parameter checkpoints.
//!
//! Layout (little-endian): magic `TORW`, `u32` version, then one record per
//! tensor until end of file: `u16` name length, name bytes (UTF-8), `u8`
//! rank, `u32` per dimension, then the values as raw `f32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::arch::ArchSpec;
use super::params::ModelParams;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TORW";
pub const VERSION: u32 = 1;

pub(crate) struct ByteReader<R> {
    inner: R,
    pub(crate) offset: u64,
}

impl<R: Read> ByteReader<R> {
    pub(crate) fn new(inner: R) -> Self {
        ByteReader { inner, offset: 0 }
    }

    /// Reads exactly `buf.len()` bytes. Returns `Ok(false)` on a clean end of
    /// input before the first byte when `eof_ok` is set.
    pub(crate) fn fill(&mut self, buf: &mut [u8], eof_ok: bool) -> Result<bool> {
        let mut read = 0;
        while read < buf.len() {
            match self.inner.read(&mut buf[read..]) {
                Ok(0) if read == 0 && eof_ok => return Ok(false),
                Ok(0) => {
                    return Err(Error::ingestion(
                        self.offset + read as u64,
                        format!("truncated input: expected {} more bytes", buf.len() - read),
                    ))
                }
                Ok(n) => read += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += buf.len() as u64;
        Ok(true)
    }

    pub(crate) fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.fill(&mut b, false)?;
        Ok(b)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    pub(crate) fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut raw = vec![0u8; n * 4];
        self.fill(&mut raw, false)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub(crate) fn expect_header(&mut self, magic: &[u8; 4], version: u32) -> Result<()> {
        let got = self.bytes::<4>()?;
        if &got != magic {
            return Err(Error::ingestion(0, format!("bad magic {got:?}, expected {magic:?}")));
        }
        let v = self.u32()?;
        if v != version {
            return Err(Error::ingestion(4, format!("unsupported format version {v}")));
        }
        Ok(())
    }
}

pub(crate) fn write_record<W: Write>(w: &mut W, name: &str, dims: &[usize], values: &[f32]) -> Result<()> {
    w.write_all(&(name.len() as u16).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&[dims.len() as u8])?;
    for &d in dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_params<W: Write>(params: &ModelParams, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for (name, dims, values) in params.named_tensors() {
        write_record(&mut w, name, &dims, values)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint for the given architecture. Every tensor must be
/// present exactly once with the shape `arch` implies.
pub fn read_params<R: Read>(arch: ArchSpec, r: R) -> Result<ModelParams> {
    arch.validate()?;
    let mut rd = ByteReader::new(r);
    rd.expect_header(MAGIC, VERSION)?;
    let mut params = ModelParams::zeros(arch);
    let expected: Vec<(&'static str, Vec<usize>)> = params
        .named_tensors()
        .into_iter()
        .map(|(n, d, _)| (n, d))
        .collect();
    let mut seen = vec![false; expected.len()];
    loop {
        let start = rd.offset;
        let mut len = [0u8; 2];
        if !rd.fill(&mut len, true)? {
            break;
        }
        let name_len = u16::from_le_bytes(len) as usize;
        let mut name = vec![0u8; name_len];
        rd.fill(&mut name, false)?;
        let name = String::from_utf8(name).map_err(|_| Error::ingestion(start + 2, "tensor name is not UTF-8"))?;
        let rank = rd.u8()? as usize;
        let dims = (0..rank).map(|_| rd.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let Some(idx) = expected.iter().position(|(n, _)| *n == name) else {
            return Err(Error::ingestion(start, format!("unknown tensor '{name}'")));
        };
        if dims != expected[idx].1 {
            return Err(Error::ingestion(
                start,
                format!("tensor '{name}' has shape {dims:?}, expected {:?}", expected[idx].1),
            ));
        }
        if seen[idx] {
            return Err(Error::ingestion(start, format!("tensor '{name}' appears twice")));
        }
        seen[idx] = true;
        let values = rd.f32s(dims.iter().product())?;
        for (n, t) in params.named_tensors_mut() {
            if n == name {
                *t = values;
                break;
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::ingestion(rd.offset, format!("missing tensor '{}'", expected[i].0)));
    }
    Ok(params)
}

pub fn save_params(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    write_params(params, BufWriter::new(File::create(path)?))
}

pub fn load_params(arch: ArchSpec, path: impl AsRef<Path>) -> Result<ModelParams> {
    read_params(arch, BufReader::new(File::open(path)?))
}
