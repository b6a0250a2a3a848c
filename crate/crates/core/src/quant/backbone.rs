use super::fold::{Activations, FoldedBackbone};
use crate::dsp::TrialWindow;
use crate::error::{Error, Result};
use crate::net::{ArchSpec, ModelParams};

pub const MIN_CALIBRATION_TRIALS: usize = 10;

/// Largest magnitude a quantized bias may take. Together with the tap bound
/// checked in [`QuantBackbone::accumulator_bound`] this keeps every
/// accumulator inside `i32`.
pub const BIAS_LIMIT: i64 = 1 << 30;

/// Affine int8 quantization of one activation tensor: `real = scale * (q - zero_point)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QParams {
    pub scale: f32,
    pub zero_point: i32,
}

impl QParams {
    /// Range-based parameters. The range is widened to contain zero so that
    /// zero padding is exactly representable.
    pub fn from_range(min: f32, max: f32) -> Self {
        let lo = f64::from(min.min(0.0));
        let hi = f64::from(max.max(0.0));
        let mut scale = (hi - lo) / 255.0;
        if !(scale > 0.0) || !scale.is_finite() {
            scale = 1.0;
        }
        let zp = (-128.0 - lo / scale).round_ties_even().clamp(-128.0, 127.0) as i32;
        QParams {
            scale: scale as f32,
            zero_point: zp,
        }
    }

    pub fn quantize(&self, v: f32) -> i8 {
        let q = (f64::from(v) / f64::from(self.scale)).round_ties_even() + f64::from(self.zero_point);
        q.clamp(-128.0, 127.0) as i8
    }

    pub fn dequantize(&self, q: i8) -> f32 {
        self.scale * (i32::from(q) - self.zero_point) as f32
    }
}

/// Symmetric per-tensor int8 weights with an optional int32 bias.
#[derive(Clone, Debug, PartialEq)]
pub struct QTensor {
    pub values: Vec<i8>,
    pub scale: f32,
}

impl QTensor {
    /// `scale = max|w| / 127`, values rounded half-to-even and clamped to
    /// `[-127, 127]`. An all-zero tensor gets scale 1 and returns `true`.
    pub fn quantize(w: &[f32]) -> (Self, bool) {
        let max = w.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        let degenerate = !(max > 0.0);
        let scale = if degenerate { 1.0 } else { max / 127.0 };
        let values = w
            .iter()
            .map(|&v| (f64::from(v) / f64::from(scale)).round_ties_even().clamp(-127.0, 127.0) as i8)
            .collect();
        (QTensor { values, scale }, degenerate)
    }

    pub fn dequantize(&self) -> Vec<f32> {
        self.values.iter().map(|&q| self.scale * f32::from(q)).collect()
    }
}

/// A calibrated, frozen 8-bit backbone.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantBackbone {
    pub arch: ArchSpec,
    pub input: QParams,
    pub spatial: QTensor,
    pub spatial_bias: Vec<i32>,
    pub act1: QParams,
    pub temporal: QTensor,
    pub temporal_bias: Vec<i32>,
    pub act2: QParams,
    pub depthwise: QTensor,
    pub act3: QParams,
    pub pointwise: QTensor,
    pub pointwise_bias: Vec<i32>,
    pub act4: QParams,
    /// Notes produced during calibration (for example degenerate weight tensors).
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug)]
struct Range {
    min: f32,
    max: f32,
}

impl Range {
    fn empty() -> Self {
        Range {
            min: f32::INFINITY,
            max: f32::NEG_INFINITY,
        }
    }

    fn extend(&mut self, v: &[f32]) {
        for &x in v {
            self.min = self.min.min(x);
            self.max = self.max.max(x);
        }
    }

    fn qparams(&self) -> QParams {
        QParams::from_range(self.min, self.max)
    }
}

fn quantize_bias(bias: &[f32], scale: f64) -> Vec<i32> {
    bias.iter()
        .map(|&b| {
            let q = (f64::from(b) / scale).round_ties_even();
            q.clamp(-(BIAS_LIMIT as f64), BIAS_LIMIT as f64) as i32
        })
        .collect()
}

/// Folds batch norm, quantizes the weights symmetrically per tensor and
/// calibrates activation ranges (min/max) over `calib`. The head is not part
/// of the result.
pub fn calibrate_quantize(params: &ModelParams, calib: &[TrialWindow]) -> Result<QuantBackbone> {
    if calib.len() < MIN_CALIBRATION_TRIALS {
        return Err(Error::Contract(format!(
            "calibration needs at least {MIN_CALIBRATION_TRIALS} trials, got {}",
            calib.len()
        )));
    }
    if !params.is_finite() {
        return Err(Error::Contract("cannot quantize non-finite parameters".into()));
    }
    let folded = FoldedBackbone::fold(params);
    let mut ranges = [Range::empty(); 5];
    for x in calib {
        let (_, Activations { a1, a2, a3, a4 }) = folded.forward(x)?;
        ranges[0].extend(x.data());
        ranges[1].extend(&a1);
        ranges[2].extend(&a2);
        ranges[3].extend(&a3);
        ranges[4].extend(&a4);
    }
    let [input, act1, act2, act3, act4] = ranges.map(|r| r.qparams());

    let mut warnings = Vec::new();
    let mut quant = |name: &str, w: &[f32]| {
        let (q, degenerate) = QTensor::quantize(w);
        if degenerate {
            warnings.push(format!("{name}: all-zero weights, scale set to 1"));
        }
        q
    };
    let spatial = quant("spatial", &folded.spatial);
    let temporal = quant("temporal", &folded.temporal);
    let depthwise = quant("depthwise", &folded.depthwise);
    let pointwise = quant("pointwise", &folded.pointwise);

    let qb = QuantBackbone {
        arch: params.arch,
        spatial_bias: quantize_bias(&folded.spatial_bias, f64::from(input.scale) * f64::from(spatial.scale)),
        temporal_bias: quantize_bias(&folded.temporal_bias, f64::from(act1.scale) * f64::from(temporal.scale)),
        pointwise_bias: quantize_bias(&folded.pointwise_bias, f64::from(act3.scale) * f64::from(pointwise.scale)),
        input,
        spatial,
        act1,
        temporal,
        act2,
        depthwise,
        act3,
        pointwise,
        act4,
        warnings,
    };
    qb.accumulator_bound()?;
    Ok(qb)
}

/// `round_half_even(acc * multiplier) + zero_point`, saturated to int8,
/// optionally clamped at the zero point (ReLU).
#[inline]
fn requantize(acc: i32, multiplier: f64, out: QParams, relu: bool) -> i8 {
    let mut q = (f64::from(acc) * multiplier).round_ties_even() + f64::from(out.zero_point);
    if relu {
        q = q.max(f64::from(out.zero_point));
    }
    q.clamp(-128.0, 127.0) as i8
}

/// "Same" integer correlation over zero-point-shifted inputs; padding
/// contributes zero (the real value zero).
fn conv_same_i32(x: &[i32], w: &[i8], acc: &mut [i32]) {
    let n = x.len();
    let pad = (w.len() - 1) / 2;
    for (j, &wj) in w.iter().enumerate() {
        let lo = pad.saturating_sub(j);
        let hi = (n + pad).saturating_sub(j).min(n);
        if lo >= hi {
            continue;
        }
        let src = lo + j - pad;
        let wj = i32::from(wj);
        for (a, &v) in acc[lo..hi].iter_mut().zip(&x[src..src + (hi - lo)]) {
            *a += wj * v;
        }
    }
}

fn maxpool_i8(x: &[i8], pool: usize, out: &mut [i8]) {
    for (o, win) in out.iter_mut().zip(x.chunks_exact(pool)) {
        *o = *win.iter().max().expect("non-empty window");
    }
}

impl QuantBackbone {
    /// Worst-case accumulator magnitude over all layers. Errors if it could
    /// exceed `i32`.
    ///
    /// Each product is at most `127 * 255` (weight times zero-point-shifted
    /// activation); the temporal layer sums 128 of them, i.e. at most
    /// 4,145,280, far inside `i32` even with a bias of up to 2^30.
    pub fn accumulator_bound(&self) -> Result<i64> {
        let a = &self.arch;
        let taps = a.n_channels.max(a.temporal_kernel).max(a.ds_kernel).max(a.n_filters) as i64;
        let bound = taps * 127 * 255 + BIAS_LIMIT;
        if bound > i64::from(i32::MAX) {
            return Err(Error::Contract(format!("accumulator bound {bound} exceeds i32")));
        }
        Ok(bound)
    }

    /// Integer forward pass; returns dequantized features.
    pub fn forward(&self, x: &TrialWindow) -> Result<Vec<f32>> {
        let a = self.arch;
        if x.n_channels() != a.n_channels || x.n_samples() != a.n_samples {
            return Err(Error::Contract(format!(
                "trial is {}x{}, backbone expects {}x{}",
                x.n_channels(),
                x.n_samples(),
                a.n_channels,
                a.n_samples
            )));
        }
        let (c_in, n, k, n1, n2) = (a.n_channels, a.n_samples, a.n_filters, a.pooled1(), a.pooled2());

        // Input, shifted by its zero point.
        let xs: Vec<i32> = x
            .data()
            .iter()
            .map(|&v| i32::from(self.input.quantize(v)) - self.input.zero_point)
            .collect();

        // Spatial.
        let m1 = f64::from(self.input.scale) * f64::from(self.spatial.scale) / f64::from(self.act1.scale);
        let mut a1 = vec![0i32; k * n];
        let mut acc = vec![0i32; n];
        for f in 0..k {
            acc.iter_mut().for_each(|v| *v = self.spatial_bias[f]);
            for c in 0..c_in {
                let w = i32::from(self.spatial.values[f * c_in + c]);
                for (s, &v) in acc.iter_mut().zip(&xs[c * n..(c + 1) * n]) {
                    *s += w * v;
                }
            }
            for (dst, &s) in a1[f * n..(f + 1) * n].iter_mut().zip(&acc) {
                *dst = i32::from(requantize(s, m1, self.act1, false)) - self.act1.zero_point;
            }
        }

        // Temporal + ReLU + pool.
        let kt = a.temporal_kernel;
        let m2 = f64::from(self.act1.scale) * f64::from(self.temporal.scale) / f64::from(self.act2.scale);
        let mut q2 = vec![0i8; n];
        let mut p1 = vec![0i32; k * n1];
        let mut pooled = vec![0i8; n1];
        for f in 0..k {
            acc.iter_mut().for_each(|v| *v = self.temporal_bias[f]);
            conv_same_i32(&a1[f * n..(f + 1) * n], &self.temporal.values[f * kt..(f + 1) * kt], &mut acc);
            for (q, &s) in q2.iter_mut().zip(&acc) {
                *q = requantize(s, m2, self.act2, true);
            }
            maxpool_i8(&q2[..n1 * a.pool1], a.pool1, &mut pooled);
            for (dst, &q) in p1[f * n1..(f + 1) * n1].iter_mut().zip(&pooled) {
                *dst = i32::from(q) - self.act2.zero_point;
            }
        }

        // Depthwise.
        let kd = a.ds_kernel;
        let m3 = f64::from(self.act2.scale) * f64::from(self.depthwise.scale) / f64::from(self.act3.scale);
        let mut a3 = vec![0i32; k * n1];
        let mut acc1 = vec![0i32; n1];
        for f in 0..k {
            acc1.iter_mut().for_each(|v| *v = 0);
            conv_same_i32(&p1[f * n1..(f + 1) * n1], &self.depthwise.values[f * kd..(f + 1) * kd], &mut acc1);
            for (dst, &s) in a3[f * n1..(f + 1) * n1].iter_mut().zip(&acc1) {
                *dst = i32::from(requantize(s, m3, self.act3, false)) - self.act3.zero_point;
            }
        }

        // Pointwise + ReLU + pool.
        let m4 = f64::from(self.act3.scale) * f64::from(self.pointwise.scale) / f64::from(self.act4.scale);
        let mut q4 = vec![0i8; n1];
        let mut out = vec![0i8; n2];
        let mut features = Vec::with_capacity(k * n2);
        for o in 0..k {
            acc1.iter_mut().for_each(|v| *v = self.pointwise_bias[o]);
            for i in 0..k {
                let w = i32::from(self.pointwise.values[o * k + i]);
                for (s, &v) in acc1.iter_mut().zip(&a3[i * n1..(i + 1) * n1]) {
                    *s += w * v;
                }
            }
            for (q, &s) in q4.iter_mut().zip(&acc1) {
                *q = requantize(s, m4, self.act4, true);
            }
            maxpool_i8(&q4[..n2 * a.pool2], a.pool2, &mut out);
            features.extend(out.iter().map(|&q| self.act4.dequantize(q)));
        }
        Ok(features)
    }
}

/// Dequantized backbone features of one trial. Never mutates `qb`.
pub fn qforward(qb: &QuantBackbone, x: &TrialWindow) -> Result<Vec<f32>> {
    qb.forward(x)
}
