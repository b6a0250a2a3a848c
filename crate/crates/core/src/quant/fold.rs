use crate::dsp::TrialWindow;
use crate::error::{Error, Result};
use crate::net::kernels::{axpy, conv_same, relu_maxpool};
use crate::net::{ArchSpec, BatchNorm, ModelParams, BN_EPS};

/// A backbone with every batch-norm absorbed into the preceding convolution.
///
/// Layer order: spatial (+bias), temporal (+bias, ReLU, pool), depthwise,
/// pointwise (+bias, ReLU, pool).
#[derive(Clone, Debug, PartialEq)]
pub struct FoldedBackbone {
    pub arch: ArchSpec,
    pub spatial: Vec<f32>,
    pub spatial_bias: Vec<f32>,
    pub temporal: Vec<f32>,
    pub temporal_bias: Vec<f32>,
    pub depthwise: Vec<f32>,
    pub pointwise: Vec<f32>,
    pub pointwise_bias: Vec<f32>,
}

/// Per-channel scale and shift equivalent to an Eval-mode batch norm.
fn bn_affine(bn: &BatchNorm) -> (Vec<f64>, Vec<f64>) {
    let scale: Vec<f64> = bn
        .gamma
        .iter()
        .zip(&bn.running_var)
        .map(|(&g, &v)| f64::from(g) / (f64::from(v) + BN_EPS).sqrt())
        .collect();
    let shift = bn
        .beta
        .iter()
        .zip(&bn.running_mean)
        .zip(&scale)
        .map(|((&b, &m), &s)| f64::from(b) - s * f64::from(m))
        .collect();
    (scale, shift)
}

fn scale_rows(w: &[f32], row_len: usize, scale: &[f64]) -> Vec<f32> {
    w.chunks(row_len)
        .zip(scale)
        .flat_map(|(row, &s)| row.iter().map(move |&v| (f64::from(v) * s) as f32))
        .collect()
}

impl FoldedBackbone {
    pub fn fold(params: &ModelParams) -> Self {
        let a = params.arch;
        let (s1, b1) = bn_affine(&params.bn1);
        let (s2, b2) = bn_affine(&params.bn2);
        let (s3, b3) = bn_affine(&params.bn3);
        let to32 = |v: Vec<f64>| v.into_iter().map(|x| x as f32).collect::<Vec<f32>>();
        FoldedBackbone {
            arch: a,
            spatial: scale_rows(&params.spatial, a.n_channels, &s1),
            spatial_bias: to32(b1),
            temporal: scale_rows(&params.temporal, a.temporal_kernel, &s2),
            temporal_bias: to32(b2),
            depthwise: params.depthwise.clone(),
            pointwise: scale_rows(&params.pointwise, a.n_filters, &s3),
            pointwise_bias: to32(b3),
        }
    }

    /// Float forward pass returning the features and the activation captured
    /// at each requantization point.
    pub fn forward(&self, x: &TrialWindow) -> Result<(Vec<f32>, Activations)> {
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
        let (n, k, n1, n2) = (a.n_samples, a.n_filters, a.pooled1(), a.pooled2());

        let mut a1 = vec![0.0f32; k * n];
        for f in 0..k {
            let row = &mut a1[f * n..(f + 1) * n];
            row.iter_mut().for_each(|v| *v = self.spatial_bias[f]);
            for c in 0..a.n_channels {
                axpy(row, self.spatial[f * a.n_channels + c], x.channel(c));
            }
        }

        let kt = a.temporal_kernel;
        let mut a2 = vec![0.0f32; k * n];
        for f in 0..k {
            let row = &mut a2[f * n..(f + 1) * n];
            conv_same(&a1[f * n..(f + 1) * n], &self.temporal[f * kt..(f + 1) * kt], row);
            for v in row.iter_mut() {
                *v = (*v + self.temporal_bias[f]).max(0.0);
            }
        }
        let mut p1 = vec![0.0f32; k * n1];
        let mut idx = vec![0u32; k * n1];
        for f in 0..k {
            relu_maxpool(
                &a2[f * n..(f + 1) * n],
                a.pool1,
                &mut p1[f * n1..(f + 1) * n1],
                &mut idx[f * n1..(f + 1) * n1],
            );
        }

        let kd = a.ds_kernel;
        let mut a3 = vec![0.0f32; k * n1];
        for f in 0..k {
            conv_same(
                &p1[f * n1..(f + 1) * n1],
                &self.depthwise[f * kd..(f + 1) * kd],
                &mut a3[f * n1..(f + 1) * n1],
            );
        }

        let mut a4 = vec![0.0f32; k * n1];
        for o in 0..k {
            let row = &mut a4[o * n1..(o + 1) * n1];
            row.iter_mut().for_each(|v| *v = self.pointwise_bias[o]);
            for i in 0..k {
                axpy(row, self.pointwise[o * k + i], &a3[i * n1..(i + 1) * n1]);
            }
            row.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        let mut features = vec![0.0f32; k * n2];
        let mut idx2 = vec![0u32; k * n2];
        for f in 0..k {
            relu_maxpool(
                &a4[f * n1..(f + 1) * n1],
                a.pool2,
                &mut features[f * n2..(f + 1) * n2],
                &mut idx2[f * n2..(f + 1) * n2],
            );
        }
        Ok((features, Activations { a1, a2, a3, a4 }))
    }
}

/// Float activations at the four requantization points of the backbone.
#[derive(Clone, Debug)]
pub struct Activations {
    /// Spatial conv + BN.
    pub a1: Vec<f32>,
    /// Temporal conv + BN + ReLU, before pooling.
    pub a2: Vec<f32>,
    /// Depthwise conv output.
    pub a3: Vec<f32>,
    /// Pointwise conv + BN + ReLU, before pooling.
    pub a4: Vec<f32>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::Label;
    use crate::net::{forward, Mode};

    fn trial(seed: u32) -> TrialWindow {
        let data = (0..8 * 1900)
            .map(|i| (((i as u32).wrapping_mul(2_654_435_761) ^ seed) % 1000) as f32 / 250.0 - 2.0)
            .collect();
        TrialWindow::new(8, 1900, data, Label::Left, 0, 0).unwrap()
    }

    #[test]
    fn folding_preserves_eval_features() {
        let mut p = ModelParams::init(ArchSpec::default(), 4).unwrap();
        for (i, bn) in [&mut p.bn1, &mut p.bn2, &mut p.bn3].into_iter().enumerate() {
            for c in 0..32 {
                let t = (c + 7 * i) as f32;
                bn.gamma[c] = 0.5 + 0.03 * t;
                bn.beta[c] = 0.1 * (t * 0.7).sin();
                bn.running_mean[c] = 0.2 * (t * 1.3).cos();
                bn.running_var[c] = 0.5 + 0.05 * t;
            }
        }
        let folded = FoldedBackbone::fold(&p);
        let x = trial(9);
        let (_, reference) = forward(&p, &x, Mode::Eval).unwrap();
        let (features, _) = folded.forward(&x).unwrap();
        let scale = reference.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        for (a, b) in features.iter().zip(&reference) {
            assert!((a - b).abs() <= 1e-4 * scale.max(1.0), "{a} vs {b}");
        }
    }
}
