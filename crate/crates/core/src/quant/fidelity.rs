use serde::Serialize;

use super::backbone::{qforward, QuantBackbone};
use crate::dsp::TrialWindow;
use crate::error::{Error, Result};
use crate::net::{argmax, forward, Mode, ModelParams};

/// Agreement between the float model and its 8-bit backbone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Fidelity {
    pub trials: usize,
    pub min_cosine: f64,
    pub mean_cosine: f64,
    /// Fraction of trials where both paths predict the same class (same head).
    pub agreement: f64,
    pub float_accuracy: f64,
    pub int8_accuracy: f64,
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 && bb == 0.0 {
        return 1.0;
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    ab / (aa.sqrt() * bb.sqrt())
}

/// Compares eval-mode float features and logits with the quantized path on `trials`.
pub fn fidelity(params: &ModelParams, qb: &QuantBackbone, trials: &[TrialWindow]) -> Result<Fidelity> {
    if trials.is_empty() {
        return Err(Error::Contract("fidelity needs at least one trial".into()));
    }
    let (mut min_cos, mut sum_cos) = (f64::INFINITY, 0.0);
    let (mut agree, mut fc, mut qc) = (0usize, 0usize, 0usize);
    for t in trials {
        let (logits, feats) = forward(params, t, Mode::Eval)?;
        let qfeats = qforward(qb, t)?;
        let c = cosine(&feats, &qfeats);
        min_cos = min_cos.min(c);
        sum_cos += c;
        let fp = argmax(&logits);
        let qp = argmax(&params.head.logits(&qfeats));
        agree += usize::from(fp == qp);
        fc += usize::from(fp == t.label.index());
        qc += usize::from(qp == t.label.index());
    }
    let n = trials.len() as f64;
    Ok(Fidelity {
        trials: trials.len(),
        min_cosine: min_cos,
        mean_cosine: sum_cos / n,
        agreement: agree as f64 / n,
        float_accuracy: fc as f64 / n,
        int8_accuracy: qc as f64 / n,
    })
}
