use crate::dsp::Label;
use crate::error::{Error, Result};
use crate::net::{loss_ce_grad, HeadParams, Real};

/// Gradient of a loss with respect to the head, given the loss gradient
/// `dlogits` at its output: the outer product `dlogits x features` for the
/// weight and `dlogits` itself for the bias.
pub fn head_gradient<T: Real>(head: &HeadParams<T>, features: &[T], dlogits: &[T]) -> HeadParams<T> {
    let f = head.feature_dim();
    let mut weight = Vec::with_capacity(head.weight.len());
    for &g in dlogits {
        weight.extend(features[..f].iter().map(|&x| g * x));
    }
    HeadParams {
        weight,
        bias: dlogits.to_vec(),
    }
}

/// One plain SGD step of the head on an arbitrary logit gradient.
pub fn head_sgd_step(head: &mut HeadParams, features: &[f32], dlogits: &[f32], lr: f32) {
    let f = head.feature_dim();
    for (c, &g) in dlogits.iter().enumerate() {
        let step = lr * g;
        for (w, &x) in head.weight[c * f..(c + 1) * f].iter_mut().zip(features) {
            *w -= step * x;
        }
        head.bias[c] -= step;
    }
}

/// One SGD step of softmax cross-entropy over the linear head only, with the
/// closed-form gradient `(softmax - onehot) x features`.
pub fn odl_step(head: &HeadParams, features: &[f32], label: Label, lr: f32) -> Result<HeadParams> {
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(Error::Parameter(format!("learning rate must be finite and non-negative, got {lr}")));
    }
    if features.len() != head.feature_dim() {
        return Err(Error::Contract(format!(
            "feature vector has {} entries, head expects {}",
            features.len(),
            head.feature_dim()
        )));
    }
    if let Some(i) = features.iter().position(|v| !v.is_finite()) {
        return Err(Error::training(0, format!("non-finite feature at index {i}")));
    }
    let dlogits = loss_ce_grad(&head.logits(features), label.index());
    let mut next = head.clone();
    head_sgd_step(&mut next, features, &dlogits, lr);
    if !next.is_finite() {
        return Err(Error::training(0, "head diverged"));
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::loss_ce;

    fn head(seed: u32, f: usize) -> HeadParams {
        let v = |i: usize| (((i as u32 + seed).wrapping_mul(2_654_435_761) >> 8) % 2001) as f32 / 1000.0 - 1.0;
        HeadParams {
            weight: (0..2 * f).map(|i| 0.1 * v(i)).collect(),
            bias: vec![0.05, -0.02],
        }
    }

    #[test]
    fn zero_rate_leaves_head_unchanged() {
        let h = head(1, 16);
        let feat: Vec<f32> = (0..16).map(|i| i as f32 * 0.1).collect();
        assert_eq!(odl_step(&h, &feat, Label::Right, 0.0).unwrap(), h);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = head(3, 12).cast::<f64>();
        let feat: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let label = 1;
        let g = head_gradient(&h, &feat, &loss_ce_grad(&h.logits(&feat), label));
        let eps = 1e-3;
        for i in 0..h.weight.len() {
            let mut plus = h.clone();
            plus.weight[i] += eps;
            let mut minus = h.clone();
            minus.weight[i] -= eps;
            let fd = (loss_ce(&plus.logits(&feat), label) - loss_ce(&minus.logits(&feat), label)) / (2.0 * eps);
            let rel = (fd - g.weight[i]).abs() / fd.abs().max(g.weight[i].abs()).max(1e-8);
            assert!(rel < 1e-3 || (fd - g.weight[i]).abs() < 1e-9, "w[{i}]: {fd} vs {}", g.weight[i]);
        }
    }

    #[test]
    fn converges_on_separable_pair() {
        let f = 8;
        let mut h = HeadParams::zeros(2, f);
        let a: Vec<f32> = (0..f).map(|i| if i < 4 { 1.0 } else { 0.0 }).collect();
        let b: Vec<f32> = (0..f).map(|i| if i < 4 { 0.0 } else { 1.0 }).collect();
        for _ in 0..150 {
            h = odl_step(&h, &a, Label::Left, 0.01).unwrap();
            h = odl_step(&h, &b, Label::Right, 0.01).unwrap();
        }
        assert_eq!(crate::net::argmax(&h.logits(&a)), 0);
        assert_eq!(crate::net::argmax(&h.logits(&b)), 1);
    }

    #[test]
    fn rejects_non_finite_features() {
        let h = HeadParams::zeros(2, 3);
        let err = odl_step(&h, &[0.0, f32::NAN, 1.0], Label::Left, 0.1).unwrap_err();
        assert!(matches!(err, Error::Training { .. }));
    }
}
