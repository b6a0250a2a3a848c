//! `EEGS` session files.
//!
//! Layout (little-endian): magic `EEGS`, `u32` version, `u32` channels,
//! `u32` sampling rate, `u32` trial count, `u32` samples per trial, then per
//! trial a `u8` label, a `u32` trial index and the channel-major `f32`
//! samples. The session number is not stored; readers supply it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::SessionRecord;
use crate::dsp::{Label, TrialWindow};
use crate::error::{Error, Result};
use crate::net::checkpoint::ByteReader;

pub const MAGIC: &[u8; 4] = b"EEGS";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 24;

/// Size in bytes of a file holding `n_trials` trials of the given shape.
pub fn file_size(n_trials: usize, n_channels: usize, n_samples: usize) -> usize {
    HEADER_BYTES + n_trials * (1 + 4 + n_channels * n_samples * 4)
}

pub fn write_session_to<W: Write>(s: &SessionRecord, mut w: W) -> Result<()> {
    let (nc, ns) = s.shape()?;
    w.write_all(MAGIC)?;
    for v in [VERSION, nc as u32, s.fs, s.trials.len() as u32, ns as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(nc * ns * 4);
    for t in &s.trials {
        w.write_all(&[t.label as u8])?;
        w.write_all(&t.trial_index.to_le_bytes())?;
        buf.clear();
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_session_from<R: Read>(r: R, session_id: u32) -> Result<SessionRecord> {
    let mut rd = ByteReader::new(r);
    rd.expect_header(MAGIC, VERSION)?;
    let nc = rd.u32()? as usize;
    let fs = rd.u32()?;
    let n_trials = rd.u32()? as usize;
    let ns = rd.u32()? as usize;
    if nc == 0 || ns == 0 || fs == 0 {
        return Err(Error::ingestion(8, format!("degenerate header: {nc} channels, {ns} samples, {fs} Hz")));
    }
    let mut trials = Vec::with_capacity(n_trials.min(4096));
    for _ in 0..n_trials {
        let at = rd.offset;
        let label = Label::from_index(rd.u8()? as usize)
            .ok_or_else(|| Error::ingestion(at, "label byte must be 0 or 1"))?;
        let trial_index = rd.u32()?;
        let data_at = rd.offset;
        let data = rd.f32s(nc * ns)?;
        let t = TrialWindow::new(nc, ns, data, label, session_id, trial_index).map_err(|e| match e {
            Error::Ingestion { offset, message } => Error::ingestion(data_at + offset * 4, message),
            other => other,
        })?;
        trials.push(t);
    }
    let mut trailing = [0u8; 1];
    if rd.fill(&mut trailing, true)? {
        return Err(Error::ingestion(rd.offset - 1, "trailing bytes after last trial"));
    }
    Ok(SessionRecord { fs, trials })
}

pub fn write_session(s: &SessionRecord, path: impl AsRef<Path>) -> Result<()> {
    write_session_to(s, BufWriter::new(File::create(path)?))
}

pub fn read_session(path: impl AsRef<Path>, session_id: u32) -> Result<SessionRecord> {
    read_session_from(BufReader::new(File::open(path)?), session_id)
}
