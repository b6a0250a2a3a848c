use super::Real;

/// Numerically stable softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - m).exp()).collect();
    let total = exps.iter().copied().fold(T::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / total).collect()
}

fn log_sum_exp<T: Real>(logits: &[T]) -> T {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let s = logits.iter().fold(T::zero(), |a, &z| a + (z - m).exp());
    m + s.ln()
}

/// Softmax cross-entropy of `logits` against class `label`.
pub fn loss_ce<T: Real>(logits: &[T], label: usize) -> T {
    log_sum_exp(logits) - logits[label]
}

/// Gradient of [`loss_ce`] with respect to the logits: `softmax - onehot`.
pub fn loss_ce_grad<T: Real>(logits: &[T], label: usize) -> Vec<T> {
    let mut p = softmax(logits);
    p[label] = p[label] - T::one();
    p
}

/// Distillation hyper-parameters: weight of the distillation term and softmax temperature.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LwfParams {
    pub lambda: f64,
    pub temperature: f64,
}

impl Default for LwfParams {
    fn default() -> Self {
        LwfParams {
            lambda: 1.0,
            temperature: 2.0,
        }
    }
}

/// Cross-entropy of the softened new prediction against the softened old one:
/// `-sum_i softmax(old/T)_i * log softmax(new/T)_i`.
pub fn distillation_term<T: Real>(new_logits: &[T], old_logits: &[T], temperature: T) -> T {
    let soft_new: Vec<T> = new_logits.iter().map(|&z| z / temperature).collect();
    let target = softmax(&old_logits.iter().map(|&z| z / temperature).collect::<Vec<_>>());
    let lse = log_sum_exp(&soft_new);
    target
        .iter()
        .zip(&soft_new)
        .fold(T::zero(), |acc, (&p, &z)| acc - p * (z - lse))
}

/// Learning-without-forgetting loss: cross-entropy on the label plus
/// `lambda` times the distillation term toward the previous model's outputs.
pub fn lwf_loss<T: Real>(new_logits: &[T], old_logits: &[T], label: usize, lambda: T, temperature: T) -> T {
    let ce = loss_ce(new_logits, label);
    if lambda == T::zero() {
        return ce;
    }
    ce + lambda * distillation_term(new_logits, old_logits, temperature)
}

/// Gradient of [`lwf_loss`] with respect to `new_logits`.
pub fn lwf_loss_grad<T: Real>(new_logits: &[T], old_logits: &[T], label: usize, lambda: T, temperature: T) -> Vec<T> {
    let mut g = loss_ce_grad(new_logits, label);
    if lambda == T::zero() {
        return g;
    }
    let scale = lambda / temperature;
    let q = softmax(&new_logits.iter().map(|&z| z / temperature).collect::<Vec<_>>());
    let p = softmax(&old_logits.iter().map(|&z| z / temperature).collect::<Vec<_>>());
    for i in 0..g.len() {
        g[i] = g[i] + scale * (q[i] - p[i]);
    }
    g
}

/// Entropy of `softmax(logits / T)`, the distillation term's lower bound.
pub fn softened_entropy<T: Real>(logits: &[T], temperature: T) -> T {
    let p = softmax(&logits.iter().map(|&z| z / temperature).collect::<Vec<_>>());
    p.iter()
        .filter(|&&v| v > T::zero())
        .fold(T::zero(), |acc, &v| acc - v * v.ln())
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln2() {
        assert!((loss_ce(&[0.0f64, 0.0], 0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((loss_ce(&[0.0f64, 0.0], 1) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn saturated_correct_is_near_zero() {
        let l = loss_ce(&[20.0f64, -20.0], 0);
        assert!(l >= 0.0 && l < 1e-8, "{l}");
    }

    #[test]
    fn closed_form_case() {
        let expected = 2.0 + (1.0 + (-2.0f64).exp()).ln();
        assert!((loss_ce(&[1.0f64, 3.0], 0) - expected).abs() < 1e-14);
        assert!((expected - 2.1269).abs() < 1e-4);
    }

    #[test]
    fn stable_for_huge_logits() {
        let l = loss_ce(&[1e4f32, -1e4], 1);
        assert!((l - 2e4).abs() < 1.0);
        assert!(loss_ce(&[1e4f32, -1e4], 0).is_finite());
    }

    #[test]
    fn lwf_reduces_to_ce_without_distillation() {
        let (z, old) = ([0.3f64, -1.2], [2.0, 0.0]);
        assert_eq!(lwf_loss(&z, &old, 1, 0.0, 2.0), loss_ce(&z, 1));
        assert_eq!(lwf_loss_grad(&z, &old, 1, 0.0, 2.0), loss_ce_grad(&z, 1));
    }

    #[test]
    fn temperature_softens() {
        let p = softmax(&[1.0f64, 0.0]);
        assert!((p[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((p[1] - 0.268_941_421_369_995_1).abs() < 1e-12);
    }

    #[test]
    fn self_distillation_equals_softened_entropy() {
        let old = [2.0f64, 0.0];
        let kd = distillation_term(&old, &old, 2.0);
        let p: f64 = 1.0f64.exp() / (1.0f64.exp() + 1.0);
        let h = -(p * p.ln() + (1.0 - p) * (1.0 - p).ln());
        assert!((kd - h).abs() < 1e-12);
        assert!((kd - 0.5822).abs() < 1e-4);
        assert!((softened_entropy(&old, 2.0) - h).abs() < 1e-12);
    }

    #[test]
    fn lwf_gradient_matches_finite_differences() {
        let z = [0.7f64, -0.4];
        let old = [-1.0, 1.5];
        let g = lwf_loss_grad(&z, &old, 0, 1.0, 2.0);
        let h = 1e-6;
        for i in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[i] += h;
            zm[i] -= h;
            let fd = (lwf_loss(&zp, &old, 0, 1.0, 2.0) - lwf_loss(&zm, &old, 0, 1.0, 2.0)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }
}
