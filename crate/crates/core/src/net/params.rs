use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use num_traits::{Float, FromPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::ArchSpec;
use super::Real;
use crate::error::{Error, Result};

/// Per-channel affine parameters and running statistics of a batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T = f32> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn identity(channels: usize) -> Self {
        BatchNorm {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    fn cast<U: Real>(&self) -> BatchNorm<U> {
        BatchNorm {
            gamma: cast_vec(&self.gamma),
            beta: cast_vec(&self.beta),
            running_mean: cast_vec(&self.running_mean),
            running_var: cast_vec(&self.running_var),
        }
    }
}

/// The trainable linear classifier on top of the flattened features.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams<T = f32> {
    /// Row-major `n_classes x feature_dim`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> HeadParams<T> {
    pub fn zeros(n_classes: usize, feature_dim: usize) -> Self {
        HeadParams {
            weight: vec![T::zero(); n_classes * feature_dim],
            bias: vec![T::zero(); n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.weight.len() / self.bias.len().max(1)
    }

    pub fn logits(&self, features: &[T]) -> Vec<T> {
        let f = self.feature_dim();
        self.bias
            .iter()
            .enumerate()
            .map(|(c, &b)| b + super::kernels::dot(&self.weight[c * f..(c + 1) * f], features))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> HeadParams<U> {
        HeadParams {
            weight: cast_vec(&self.weight),
            bias: cast_vec(&self.bias),
        }
    }
}

/// Full-precision network parameters.
///
/// Weight layouts (row-major):
/// - `spatial`: `n_filters x n_channels`
/// - `temporal`: `n_filters x temporal_kernel`
/// - `depthwise`: `n_filters x ds_kernel`
/// - `pointwise`: `n_filters (out) x n_filters (in)`
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = f32> {
    pub arch: ArchSpec,
    pub spatial: Vec<T>,
    pub bn1: BatchNorm<T>,
    pub temporal: Vec<T>,
    pub bn2: BatchNorm<T>,
    pub depthwise: Vec<T>,
    pub pointwise: Vec<T>,
    pub bn3: BatchNorm<T>,
    pub head: HeadParams<T>,
}

/// Which parameters an update may touch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    #[default]
    FullModel,
    HeadOnly,
}

impl std::str::FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "full-model" | "full_model" => Ok(Scope::FullModel),
            "head" | "head-only" | "head_only" => Ok(Scope::HeadOnly),
            _ => Err(Error::Config(format!("unknown training scope '{s}'"))),
        }
    }
}

/// Canonical order of the trainable tensors; gradients and optimizer state follow it.
pub const TRAINABLE: [&str; 12] = [
    "spatial.weight",
    "bn1.gamma",
    "bn1.beta",
    "temporal.weight",
    "bn2.gamma",
    "bn2.beta",
    "depthwise.weight",
    "pointwise.weight",
    "bn3.gamma",
    "bn3.beta",
    "head.weight",
    "head.bias",
];

/// Index of the first head tensor in [`TRAINABLE`].
pub const HEAD_START: usize = 10;

impl Scope {
    pub fn tensor_range(self) -> std::ops::Range<usize> {
        match self {
            Scope::FullModel => 0..TRAINABLE.len(),
            Scope::HeadOnly => HEAD_START..TRAINABLE.len(),
        }
    }
}

pub(crate) fn cast_vec<T: Real, U: Real>(v: &[T]) -> Vec<U> {
    v.iter()
        .map(|&x| U::from_f64(x.to_f64().unwrap_or(f64::NAN)).unwrap_or_else(U::nan))
        .collect()
}

impl<T: Real> ModelParams<T> {
    /// Zero weights, identity batch norm.
    pub fn zeros(arch: ArchSpec) -> Self {
        let k = arch.n_filters;
        ModelParams {
            arch,
            spatial: vec![T::zero(); k * arch.n_channels],
            bn1: BatchNorm::identity(k),
            temporal: vec![T::zero(); k * arch.temporal_kernel],
            bn2: BatchNorm::identity(k),
            depthwise: vec![T::zero(); k * arch.ds_kernel],
            pointwise: vec![T::zero(); k * k],
            bn3: BatchNorm::identity(k),
            head: HeadParams::zeros(arch.n_classes, arch.feature_dim()),
        }
    }

    /// Kaiming-uniform weights (bound `sqrt(6 / fan_in)`), zero head bias,
    /// identity batch norm. Deterministic in `seed`.
    pub fn init(arch: ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(arch);
        let mut fill = |w: &mut Vec<T>, fan_in: usize| {
            let bound = (6.0 / fan_in as f64).sqrt();
            for v in w.iter_mut() {
                *v = T::from_f64(rng.gen_range(-bound..bound)).unwrap();
            }
        };
        fill(&mut p.spatial, arch.n_channels);
        fill(&mut p.temporal, arch.temporal_kernel);
        fill(&mut p.depthwise, arch.ds_kernel);
        fill(&mut p.pointwise, arch.n_filters);
        fill(&mut p.head.weight, arch.feature_dim());
        Ok(p)
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            arch: self.arch,
            spatial: cast_vec(&self.spatial),
            bn1: self.bn1.cast(),
            temporal: cast_vec(&self.temporal),
            bn2: self.bn2.cast(),
            depthwise: cast_vec(&self.depthwise),
            pointwise: cast_vec(&self.pointwise),
            bn3: self.bn3.cast(),
            head: self.head.cast(),
        }
    }

    /// Trainable tensors in [`TRAINABLE`] order.
    pub fn trainable(&self) -> [&[T]; 12] {
        [
            &self.spatial,
            &self.bn1.gamma,
            &self.bn1.beta,
            &self.temporal,
            &self.bn2.gamma,
            &self.bn2.beta,
            &self.depthwise,
            &self.pointwise,
            &self.bn3.gamma,
            &self.bn3.beta,
            &self.head.weight,
            &self.head.bias,
        ]
    }

    pub fn trainable_mut(&mut self) -> [&mut Vec<T>; 12] {
        [
            &mut self.spatial,
            &mut self.bn1.gamma,
            &mut self.bn1.beta,
            &mut self.temporal,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
            &mut self.depthwise,
            &mut self.pointwise,
            &mut self.bn3.gamma,
            &mut self.bn3.beta,
            &mut self.head.weight,
            &mut self.head.bias,
        ]
    }

    /// Every tensor including running statistics, with checkpoint names and shapes.
    pub fn named_tensors(&self) -> Vec<(&'static str, Vec<usize>, &[T])> {
        let a = &self.arch;
        let k = a.n_filters;
        let mut out: Vec<(&'static str, Vec<usize>, &[T])> = Vec::with_capacity(18);
        out.push(("spatial.weight", vec![k, a.n_channels, 1], &self.spatial));
        push_bn(&mut out, ["bn1.gamma", "bn1.beta", "bn1.running_mean", "bn1.running_var"], &self.bn1);
        out.push(("temporal.weight", vec![k, 1, a.temporal_kernel], &self.temporal));
        push_bn(&mut out, ["bn2.gamma", "bn2.beta", "bn2.running_mean", "bn2.running_var"], &self.bn2);
        out.push(("depthwise.weight", vec![k, 1, a.ds_kernel], &self.depthwise));
        out.push(("pointwise.weight", vec![k, k, 1, 1], &self.pointwise));
        push_bn(&mut out, ["bn3.gamma", "bn3.beta", "bn3.running_mean", "bn3.running_var"], &self.bn3);
        out.push(("head.weight", vec![a.n_classes, a.feature_dim()], &self.head.weight));
        out.push(("head.bias", vec![a.n_classes], &self.head.bias));
        out
    }

    /// Mutable view of every tensor in [`ModelParams::named_tensors`] order.
    pub fn named_tensors_mut(&mut self) -> Vec<(&'static str, &mut Vec<T>)> {
        vec![
            ("spatial.weight", &mut self.spatial),
            ("bn1.gamma", &mut self.bn1.gamma),
            ("bn1.beta", &mut self.bn1.beta),
            ("bn1.running_mean", &mut self.bn1.running_mean),
            ("bn1.running_var", &mut self.bn1.running_var),
            ("temporal.weight", &mut self.temporal),
            ("bn2.gamma", &mut self.bn2.gamma),
            ("bn2.beta", &mut self.bn2.beta),
            ("bn2.running_mean", &mut self.bn2.running_mean),
            ("bn2.running_var", &mut self.bn2.running_var),
            ("depthwise.weight", &mut self.depthwise),
            ("pointwise.weight", &mut self.pointwise),
            ("bn3.gamma", &mut self.bn3.gamma),
            ("bn3.beta", &mut self.bn3.beta),
            ("bn3.running_mean", &mut self.bn3.running_mean),
            ("bn3.running_var", &mut self.bn3.running_var),
            ("head.weight", &mut self.head.weight),
            ("head.bias", &mut self.head.bias),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors()
            .iter()
            .all(|(_, _, t)| t.iter().all(|v| v.is_finite()))
            && self
                .bn1
                .running_var
                .iter()
                .chain(&self.bn2.running_var)
                .chain(&self.bn3.running_var)
                .all(|&v| v >= T::zero())
    }
}

impl ModelParams<f32> {
    /// Hash of every backbone tensor (everything except the head), including
    /// running statistics. Stable within a build.
    pub fn backbone_fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (name, _, t) in self.named_tensors() {
            if name.starts_with("head.") {
                continue;
            }
            name.hash(&mut h);
            for v in t {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.backbone_fingerprint().hash(&mut h);
        for v in self.head.weight.iter().chain(&self.head.bias) {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

fn push_bn<'a, T>(
    out: &mut Vec<(&'static str, Vec<usize>, &'a [T])>,
    names: [&'static str; 4],
    bn: &'a BatchNorm<T>,
) {
    let k = bn.gamma.len();
    out.push((names[0], vec![k], &bn.gamma));
    out.push((names[1], vec![k], &bn.beta));
    out.push((names[2], vec![k], &bn.running_mean));
    out.push((names[3], vec![k], &bn.running_var));
}

/// Converts a scalar, panicking only for values no float type can hold.
pub(crate) fn lit<T: Float + FromPrimitive>(v: f64) -> T {
    T::from_f64(v).expect("representable constant")
}
