//! `TORQ` quantized-backbone checkpoints.
//!
//! Layout (little-endian): magic `TORQ`, `u32` version, the architecture as
//! eight `u32` (channels, samples, filters, temporal kernel, depthwise
//! kernel, pool 1, pool 2, classes), five activation records (`f32` scale, `i32` zero
//! point) for input and the four requantization points, then four weight
//! records: `f32` scale, `u32` count, `i8` values, `u32` bias count, `i32`
//! biases.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::backbone::{QParams, QTensor, QuantBackbone};
use crate::error::{Error, Result};
use crate::net::checkpoint::ByteReader;
use crate::net::ArchSpec;

pub const MAGIC: &[u8; 4] = b"TORQ";
pub const VERSION: u32 = 1;

fn arch_fields(a: &ArchSpec) -> [usize; 8] {
    [
        a.n_channels,
        a.n_samples,
        a.n_filters,
        a.temporal_kernel,
        a.ds_kernel,
        a.pool1,
        a.pool2,
        a.n_classes,
    ]
}

pub fn write_quant<W: Write>(qb: &QuantBackbone, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in arch_fields(&qb.arch) {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    for q in [qb.input, qb.act1, qb.act2, qb.act3, qb.act4] {
        w.write_all(&q.scale.to_le_bytes())?;
        w.write_all(&q.zero_point.to_le_bytes())?;
    }
    let empty: Vec<i32> = Vec::new();
    for (t, bias) in [
        (&qb.spatial, &qb.spatial_bias),
        (&qb.temporal, &qb.temporal_bias),
        (&qb.depthwise, &empty),
        (&qb.pointwise, &qb.pointwise_bias),
    ] {
        w.write_all(&t.scale.to_le_bytes())?;
        w.write_all(&(t.values.len() as u32).to_le_bytes())?;
        w.write_all(&t.values.iter().map(|&v| v as u8).collect::<Vec<u8>>())?;
        w.write_all(&(bias.len() as u32).to_le_bytes())?;
        for b in bias {
            w.write_all(&b.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_quant<R: Read>(r: R) -> Result<QuantBackbone> {
    let mut rd = ByteReader::new(r);
    rd.expect_header(MAGIC, VERSION)?;
    let mut f = [0usize; 8];
    for v in &mut f {
        *v = rd.u32()? as usize;
    }
    let arch = ArchSpec {
        n_channels: f[0],
        n_samples: f[1],
        n_filters: f[2],
        temporal_kernel: f[3],
        ds_kernel: f[4],
        pool1: f[5],
        pool2: f[6],
        n_classes: f[7],
    };
    arch.validate().map_err(|e| Error::ingestion(8, format!("invalid architecture: {e}")))?;

    let mut acts = [QParams { scale: 1.0, zero_point: 0 }; 5];
    for q in &mut acts {
        let at = rd.offset;
        let scale = f32::from_le_bytes(rd.bytes()?);
        let zero_point = i32::from_le_bytes(rd.bytes()?);
        if !(scale > 0.0) || !scale.is_finite() || !(-128..=127).contains(&zero_point) {
            return Err(Error::ingestion(at, format!("invalid activation parameters ({scale}, {zero_point})")));
        }
        *q = QParams { scale, zero_point };
    }

    let k = arch.n_filters;
    let shapes = [
        (k * arch.n_channels, k),
        (k * arch.temporal_kernel, k),
        (k * arch.ds_kernel, 0),
        (k * k, k),
    ];
    let mut tensors = Vec::with_capacity(4);
    for (n_w, n_b) in shapes {
        let at = rd.offset;
        let scale = f32::from_le_bytes(rd.bytes()?);
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::ingestion(at, format!("invalid weight scale {scale}")));
        }
        let count = rd.u32()? as usize;
        if count != n_w {
            return Err(Error::ingestion(at + 4, format!("expected {n_w} weights, found {count}")));
        }
        let mut raw = vec![0u8; count];
        let values_at = rd.offset;
        rd.fill(&mut raw, false)?;
        let values: Vec<i8> = raw.into_iter().map(|b| b as i8).collect();
        if let Some(i) = values.iter().position(|&v| v == i8::MIN) {
            return Err(Error::ingestion(values_at + i as u64, "weight value -128 is outside [-127, 127]"));
        }
        let bias_at = rd.offset;
        let n_bias = rd.u32()? as usize;
        if n_bias != n_b {
            return Err(Error::ingestion(bias_at, format!("expected {n_b} biases, found {n_bias}")));
        }
        let bias = (0..n_bias)
            .map(|_| rd.bytes().map(i32::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        tensors.push((QTensor { values, scale }, bias));
    }
    let mut trailing = [0u8; 1];
    if rd.fill(&mut trailing, true)? {
        return Err(Error::ingestion(rd.offset - 1, "trailing bytes after checkpoint"));
    }
    let mut it = tensors.into_iter();
    let (spatial, spatial_bias) = it.next().expect("four tensors");
    let (temporal, temporal_bias) = it.next().expect("four tensors");
    let (depthwise, _) = it.next().expect("four tensors");
    let (pointwise, pointwise_bias) = it.next().expect("four tensors");
    let [input, act1, act2, act3, act4] = acts;
    let qb = QuantBackbone {
        arch,
        input,
        spatial,
        spatial_bias,
        act1,
        temporal,
        temporal_bias,
        act2,
        depthwise,
        act3,
        pointwise,
        pointwise_bias,
        act4,
        warnings: Vec::new(),
    };
    qb.accumulator_bound()?;
    Ok(qb)
}

pub fn save_quant(qb: &QuantBackbone, path: impl AsRef<Path>) -> Result<()> {
    write_quant(qb, BufWriter::new(File::create(path)?))
}

pub fn load_quant(path: impl AsRef<Path>) -> Result<QuantBackbone> {
    read_quant(BufReader::new(File::open(path)?))
}
