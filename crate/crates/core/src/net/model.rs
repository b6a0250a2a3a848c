use super::kernels::{axpy, conv_same, conv_same_backward, dot, relu_maxpool, relu_maxpool_backward, sum};
use super::params::{lit, BatchNorm, ModelParams, Scope};
use super::Real;
use crate::dsp::TrialWindow;
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Batch-norm behaviour during a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Normalize with batch statistics.
    Train,
    /// Normalize with running statistics.
    Eval,
}

/// Mean and biased variance observed by one batch-norm layer in Train mode.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    /// Number of values each statistic was computed over.
    pub count: usize,
}

#[derive(Clone, Debug)]
struct BnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    stats: Option<BatchStats<T>>,
}

/// Activations kept for the backward pass. Buffers are `[batch][filter][time]`.
#[derive(Clone, Debug)]
pub struct ForwardPass<T> {
    pub mode: Mode,
    batch: usize,
    bn1: Option<BnCache<T>>,
    y1: Vec<T>,
    bn2: Option<BnCache<T>>,
    p1: Vec<T>,
    arg1: Vec<u32>,
    d: Vec<T>,
    bn3: Option<BnCache<T>>,
    arg2: Vec<u32>,
    /// `[batch][feature]`, filter-major within a sample.
    pub features: Vec<T>,
    /// `[batch][class]`.
    pub logits: Vec<T>,
}

impl<T: Real> ForwardPass<T> {
    pub fn batch_len(&self) -> usize {
        self.batch
    }

    pub fn logits_of(&self, b: usize) -> &[T] {
        let c = self.logits.len() / self.batch;
        &self.logits[b * c..(b + 1) * c]
    }

    pub fn features_of(&self, b: usize) -> &[T] {
        let f = self.features.len() / self.batch;
        &self.features[b * f..(b + 1) * f]
    }

    /// Batch statistics of the three batch-norm layers (Train mode only).
    pub fn batch_stats(&self) -> Option<[&BatchStats<T>; 3]> {
        Some([
            self.bn1.as_ref()?.stats.as_ref()?,
            self.bn2.as_ref()?.stats.as_ref()?,
            self.bn3.as_ref()?.stats.as_ref()?,
        ])
    }
}

/// Gradients in the same layout as [`ModelParams`]' trainable tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub tensors: [Vec<T>; 12],
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(p: &ModelParams<T>) -> Self {
        Gradients {
            tensors: p.trainable().map(|t| vec![T::zero(); t.len()]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

fn check_input<T: Real>(params: &ModelParams<T>, x: &TrialWindow) -> Result<()> {
    let a = &params.arch;
    if x.n_channels() != a.n_channels || x.n_samples() != a.n_samples {
        return Err(Error::Contract(format!(
            "trial is {}x{}, network expects {}x{}",
            x.n_channels(),
            x.n_samples(),
            a.n_channels,
            a.n_samples
        )));
    }
    Ok(())
}

/// Batch norm over `[batch][channel][len]` in place.
fn bn_forward<T: Real>(x: &mut [T], batch: usize, len: usize, bn: &BatchNorm<T>, mode: Mode) -> BnCache<T> {
    let k = bn.gamma.len();
    let eps: T = lit(BN_EPS);
    let count = batch * len;
    let (mean, var, stats) = match mode {
        Mode::Eval => (bn.running_mean.clone(), bn.running_var.clone(), None),
        Mode::Train => {
            let n: T = lit(count as f64);
            let mut mean = vec![T::zero(); k];
            let mut var = vec![T::zero(); k];
            for c in 0..k {
                let mut s = T::zero();
                for b in 0..batch {
                    s = s + sum(&x[(b * k + c) * len..(b * k + c + 1) * len]);
                }
                let m = s / n;
                let mut ss = T::zero();
                for b in 0..batch {
                    let row = &x[(b * k + c) * len..(b * k + c + 1) * len];
                    let mut acc = [T::zero(); 4];
                    let chunks = row.chunks_exact(4);
                    let rest = chunks.remainder();
                    for ch in chunks {
                        for i in 0..4 {
                            let d = ch[i] - m;
                            acc[i] = acc[i] + d * d;
                        }
                    }
                    let mut tail = T::zero();
                    for &v in rest {
                        tail = tail + (v - m) * (v - m);
                    }
                    ss = ss + ((acc[0] + acc[2]) + (acc[1] + acc[3])) + tail;
                }
                mean[c] = m;
                var[c] = ss / n;
            }
            (
                mean.clone(),
                var.clone(),
                Some(BatchStats { mean, var, count }),
            )
        }
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); x.len()];
    for b in 0..batch {
        for c in 0..k {
            let off = (b * k + c) * len;
            let (m, is, g, be) = (mean[c], inv_std[c], bn.gamma[c], bn.beta[c]);
            for (xv, hv) in x[off..off + len].iter_mut().zip(&mut xhat[off..off + len]) {
                let h = (*xv - m) * is;
                *hv = h;
                *xv = g * h + be;
            }
        }
    }
    BnCache { xhat, inv_std, stats }
}

/// Returns `dx` (overwriting `dy`) and accumulates `dgamma`, `dbeta`.
fn bn_backward<T: Real>(
    dy: &mut [T],
    batch: usize,
    len: usize,
    gamma: &[T],
    cache: &BnCache<T>,
    dgamma: &mut [T],
    dbeta: &mut [T],
) {
    let k = gamma.len();
    let n: T = lit((batch * len) as f64);
    for c in 0..k {
        let mut sdy = T::zero();
        let mut sdyx = T::zero();
        for b in 0..batch {
            let off = (b * k + c) * len;
            sdy = sdy + sum(&dy[off..off + len]);
            sdyx = sdyx + dot(&dy[off..off + len], &cache.xhat[off..off + len]);
        }
        dgamma[c] = dgamma[c] + sdyx;
        dbeta[c] = dbeta[c] + sdy;
        let scale = gamma[c] * cache.inv_std[c];
        for b in 0..batch {
            let off = (b * k + c) * len;
            let rows = dy[off..off + len].iter_mut().zip(&cache.xhat[off..off + len]);
            if cache.stats.is_some() {
                let (mdy, mdyx) = (sdy / n, sdyx / n);
                for (g, &h) in rows {
                    *g = scale * (*g - mdy - h * mdyx);
                }
            } else {
                for (g, _) in rows {
                    *g = scale * *g;
                }
            }
        }
    }
}

/// Runs the network on a batch of trials.
///
/// Pipeline per sample: spatial depthwise conv (collapses electrodes) → BN →
/// temporal depthwise conv ("same") → BN → ReLU → max-pool → depthwise conv
/// ("same") → pointwise conv → BN → ReLU → max-pool → flatten → linear head.
///
/// The pass is pure: in Train mode the batch statistics are returned in the
/// result and applied to the running statistics by [`update_running_stats`].
pub fn forward_batch<T: Real>(params: &ModelParams<T>, batch: &[&TrialWindow], mode: Mode) -> Result<ForwardPass<T>> {
    if batch.is_empty() {
        return Err(Error::Contract("forward pass on an empty batch".into()));
    }
    for x in batch {
        check_input(params, x)?;
    }
    let a = params.arch;
    let (nb, c_in, n, k) = (batch.len(), a.n_channels, a.n_samples, a.n_filters);
    let (n1, n2) = (a.pooled1(), a.pooled2());

    // Spatial convolution: s[b][k][t] = sum_c W[k][c] x[b][c][t]
    let mut y1 = vec![T::zero(); nb * k * n];
    let mut xin = vec![T::zero(); n];
    for (b, x) in batch.iter().enumerate() {
        for c in 0..c_in {
            for (dst, &src) in xin.iter_mut().zip(x.channel(c)) {
                *dst = lit(f64::from(src));
            }
            for f in 0..k {
                let w = params.spatial[f * c_in + c];
                axpy(&mut y1[(b * k + f) * n..(b * k + f + 1) * n], w, &xin);
            }
        }
    }
    let bn1 = bn_forward(&mut y1, nb, n, &params.bn1, mode);

    // Temporal depthwise convolution.
    let kt = a.temporal_kernel;
    let mut u = vec![T::zero(); nb * k * n];
    for b in 0..nb {
        for f in 0..k {
            let off = (b * k + f) * n;
            conv_same(&y1[off..off + n], &params.temporal[f * kt..(f + 1) * kt], &mut u[off..off + n]);
        }
    }
    let bn2 = bn_forward(&mut u, nb, n, &params.bn2, mode);

    let mut p1 = vec![T::zero(); nb * k * n1];
    let mut arg1 = vec![0u32; nb * k * n1];
    for row in 0..nb * k {
        relu_maxpool(
            &u[row * n..(row + 1) * n],
            a.pool1,
            &mut p1[row * n1..(row + 1) * n1],
            &mut arg1[row * n1..(row + 1) * n1],
        );
    }
    drop(u);

    // Depthwise-separable block.
    let kd = a.ds_kernel;
    let mut d = vec![T::zero(); nb * k * n1];
    for row in 0..nb * k {
        let f = row % k;
        conv_same(
            &p1[row * n1..(row + 1) * n1],
            &params.depthwise[f * kd..(f + 1) * kd],
            &mut d[row * n1..(row + 1) * n1],
        );
    }
    let mut q = vec![T::zero(); nb * k * n1];
    for b in 0..nb {
        for o in 0..k {
            let dst = (b * k + o) * n1;
            for i in 0..k {
                let w = params.pointwise[o * k + i];
                let src = (b * k + i) * n1;
                let (qs, ds) = (&mut q[dst..dst + n1], &d[src..src + n1]);
                axpy(qs, w, ds);
            }
        }
    }
    let bn3 = bn_forward(&mut q, nb, n1, &params.bn3, mode);

    let fdim = k * n2;
    let mut features = vec![T::zero(); nb * fdim];
    let mut arg2 = vec![0u32; nb * fdim];
    for row in 0..nb * k {
        relu_maxpool(
            &q[row * n1..(row + 1) * n1],
            a.pool2,
            &mut features[row * n2..(row + 1) * n2],
            &mut arg2[row * n2..(row + 1) * n2],
        );
    }

    let mut logits = Vec::with_capacity(nb * a.n_classes);
    for b in 0..nb {
        logits.extend(params.head.logits(&features[b * fdim..(b + 1) * fdim]));
    }

    Ok(ForwardPass {
        mode,
        batch: nb,
        bn1: Some(bn1),
        y1,
        bn2: Some(bn2),
        p1,
        arg1,
        d,
        bn3: Some(bn3),
        arg2,
        features,
        logits,
    })
}

/// Folds Train-mode batch statistics into the running estimates
/// (`momentum` 0.1, unbiased variance). No-op for Eval passes.
pub fn update_running_stats<T: Real>(params: &mut ModelParams<T>, pass: &ForwardPass<T>) {
    let Some(stats) = pass.batch_stats() else {
        return;
    };
    let m: T = lit(BN_MOMENTUM);
    let keep = T::one() - m;
    for (bn, st) in [&mut params.bn1, &mut params.bn2, &mut params.bn3].into_iter().zip(stats) {
        let n = st.count as f64;
        let unbias: T = lit(if n > 1.0 { n / (n - 1.0) } else { 1.0 });
        for c in 0..bn.gamma.len() {
            bn.running_mean[c] = keep * bn.running_mean[c] + m * st.mean[c];
            bn.running_var[c] = keep * bn.running_var[c] + m * st.var[c] * unbias;
        }
    }
}

/// Logits and flattened features of one trial.
pub fn forward<T: Real>(params: &ModelParams<T>, x: &TrialWindow, mode: Mode) -> Result<(Vec<T>, Vec<T>)> {
    let pass = forward_batch(params, &[x], mode)?;
    Ok((pass.logits, pass.features))
}

/// Backpropagates `dlogits` (`[batch][class]`, already scaled by the loss)
/// through the cached pass of `batch`. Only tensors in `scope` receive gradients.
pub fn backward<T: Real>(
    params: &ModelParams<T>,
    batch: &[&TrialWindow],
    pass: &ForwardPass<T>,
    dlogits: &[T],
    scope: Scope,
) -> Gradients<T> {
    let a = params.arch;
    let (nb, c_in, n, k) = (pass.batch, a.n_channels, a.n_samples, a.n_filters);
    let (n1, n2) = (a.pooled1(), a.pooled2());
    let nc = a.n_classes;
    let fdim = a.feature_dim();
    let mut g = Gradients::zeros_like(params);

    // Head.
    let mut dfeat = vec![T::zero(); nb * fdim];
    for b in 0..nb {
        let feat = &pass.features[b * fdim..(b + 1) * fdim];
        for c in 0..nc {
            let gl = dlogits[b * nc + c];
            g.tensors[11][c] = g.tensors[11][c] + gl;
            axpy(&mut g.tensors[10][c * fdim..(c + 1) * fdim], gl, feat);
            if scope == Scope::FullModel {
                axpy(
                    &mut dfeat[b * fdim..(b + 1) * fdim],
                    gl,
                    &params.head.weight[c * fdim..(c + 1) * fdim],
                );
            }
        }
    }
    if scope == Scope::HeadOnly {
        return g;
    }
    let [g_spatial, g_g1, g_b1, g_temporal, g_g2, g_b2, g_dw, g_pw, g_g3, g_b3, _, _] = &mut g.tensors;

    // Second pooling + ReLU, then BN3.
    let mut dq = vec![T::zero(); nb * k * n1];
    for row in 0..nb * k {
        relu_maxpool_backward(
            &pass.features[row * n2..(row + 1) * n2],
            &pass.arg2[row * n2..(row + 1) * n2],
            &dfeat[row * n2..(row + 1) * n2],
            &mut dq[row * n1..(row + 1) * n1],
        );
    }
    let bn3 = pass.bn3.as_ref().expect("forward cache");
    bn_backward(&mut dq, nb, n1, &params.bn3.gamma, bn3, g_g3, g_b3);

    // Pointwise.
    let mut dd = vec![T::zero(); nb * k * n1];
    for b in 0..nb {
        for o in 0..k {
            let go = &dq[(b * k + o) * n1..(b * k + o + 1) * n1];
            for i in 0..k {
                let src = (b * k + i) * n1;
                g_pw[o * k + i] = g_pw[o * k + i] + dot(go, &pass.d[src..src + n1]);
                axpy(&mut dd[src..src + n1], params.pointwise[o * k + i], go);
            }
        }
    }

    // Depthwise (DS block).
    let kd = a.ds_kernel;
    let mut dp1 = vec![T::zero(); nb * k * n1];
    for row in 0..nb * k {
        let f = row % k;
        conv_same_backward(
            &pass.p1[row * n1..(row + 1) * n1],
            &params.depthwise[f * kd..(f + 1) * kd],
            &dd[row * n1..(row + 1) * n1],
            Some(&mut dp1[row * n1..(row + 1) * n1]),
            &mut g_dw[f * kd..(f + 1) * kd],
        );
    }

    // First pooling + ReLU, then BN2.
    let mut du = vec![T::zero(); nb * k * n];
    for row in 0..nb * k {
        relu_maxpool_backward(
            &pass.p1[row * n1..(row + 1) * n1],
            &pass.arg1[row * n1..(row + 1) * n1],
            &dp1[row * n1..(row + 1) * n1],
            &mut du[row * n..(row + 1) * n],
        );
    }
    let bn2 = pass.bn2.as_ref().expect("forward cache");
    bn_backward(&mut du, nb, n, &params.bn2.gamma, bn2, g_g2, g_b2);

    // Temporal.
    let kt = a.temporal_kernel;
    let mut dy1 = vec![T::zero(); nb * k * n];
    for row in 0..nb * k {
        let f = row % k;
        conv_same_backward(
            &pass.y1[row * n..(row + 1) * n],
            &params.temporal[f * kt..(f + 1) * kt],
            &du[row * n..(row + 1) * n],
            Some(&mut dy1[row * n..(row + 1) * n]),
            &mut g_temporal[f * kt..(f + 1) * kt],
        );
    }
    let bn1 = pass.bn1.as_ref().expect("forward cache");
    bn_backward(&mut dy1, nb, n, &params.bn1.gamma, bn1, g_g1, g_b1);

    // Spatial weights: dW[f][c] = sum_b sum_t ds[b][f][t] * x[b][c][t].
    let mut xin = vec![T::zero(); n];
    for (b, x) in batch.iter().enumerate() {
        for c in 0..c_in {
            for (dst, &src) in xin.iter_mut().zip(x.channel(c)) {
                *dst = lit(f64::from(src));
            }
            for f in 0..k {
                let ds = &dy1[(b * k + f) * n..(b * k + f + 1) * n];
                g_spatial[f * c_in + c] = g_spatial[f * c_in + c] + dot(ds, &xin);
            }
        }
    }
    g
}
