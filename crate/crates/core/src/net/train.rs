use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_ce, loss_ce_grad, lwf_loss, lwf_loss_grad, LwfParams};
use super::model::{backward, forward_batch, update_running_stats, ForwardPass, Gradients, Mode};
use super::params::{lit, ModelParams, Scope};
use super::Real;
use crate::dsp::{Label, TrialWindow};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::adam()),
            "sgd" => Ok(OptimizerKind::Sgd),
            _ => Err(Error::Config(format!("unknown optimizer '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub scope: Scope,
    pub optimizer: OptimizerKind,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    /// Visit trials in a fresh random order every epoch instead of as given.
    pub shuffle: bool,
    /// Normalize with the running statistics (and leave them untouched) even
    /// when the whole model trains.
    pub frozen_bn: bool,
}

impl TrainConfig {
    /// Host-side training on the first session: 40 epochs at 1e-3, batches of 10.
    pub fn pretrain(seed: u64) -> Self {
        TrainConfig {
            epochs: 40,
            lr: 1e-3,
            batch_size: 10,
            scope: Scope::FullModel,
            optimizer: OptimizerKind::adam(),
            seed,
            shuffle: true,
            frozen_bn: false,
        }
    }

    /// Per-trial finetuning: 15 epochs at 2e-3, one trial per step, acquisition order.
    pub fn finetune(scope: Scope, seed: u64) -> Self {
        TrainConfig {
            epochs: 15,
            lr: 2e-3,
            batch_size: 1,
            scope,
            optimizer: OptimizerKind::adam(),
            seed,
            shuffle: false,
            frozen_bn: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate {} must be non-negative", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// What a training step minimizes.
#[derive(Clone, Copy, Debug)]
pub enum Objective<'a, T = f32> {
    CrossEntropy,
    /// Cross-entropy plus distillation toward a frozen teacher's softened outputs.
    Distill {
        teacher: &'a ModelParams<T>,
        lwf: LwfParams,
    },
}

/// Forward mode used for training in `scope`.
pub fn mode_for(scope: Scope, frozen_bn: bool) -> Mode {
    match scope {
        Scope::FullModel if !frozen_bn => Mode::Train,
        // The backbone (and its batch-norm statistics) stays frozen.
        _ => Mode::Eval,
    }
}

fn teacher_logits<T: Real>(objective: &Objective<'_, T>, batch: &[&TrialWindow]) -> Result<Option<Vec<T>>> {
    match objective {
        Objective::CrossEntropy => Ok(None),
        Objective::Distill { teacher, .. } => Ok(Some(forward_batch(teacher, batch, Mode::Eval)?.logits)),
    }
}

fn per_sample_loss<T: Real>(
    objective: &Objective<'_, T>,
    logits: &[T],
    old: Option<&[T]>,
    label: usize,
) -> (T, Vec<T>) {
    match (objective, old) {
        (Objective::Distill { lwf, .. }, Some(old)) => {
            let (lambda, temp) = (lit(lwf.lambda), lit(lwf.temperature));
            (
                lwf_loss(logits, old, label, lambda, temp),
                lwf_loss_grad(logits, old, label, lambda, temp),
            )
        }
        _ => (loss_ce(logits, label), loss_ce_grad(logits, label)),
    }
}

/// Mean loss over `batch` in the forward mode implied by `scope`.
pub fn batch_loss<T: Real>(
    params: &ModelParams<T>,
    batch: &[&TrialWindow],
    objective: &Objective<'_, T>,
    scope: Scope,
) -> Result<T> {
    let pass = forward_batch(params, batch, mode_for(scope, false))?;
    let old = teacher_logits(objective, batch)?;
    let nc = params.arch.n_classes;
    let mut total = T::zero();
    for (b, x) in batch.iter().enumerate() {
        let o = old.as_ref().map(|v| &v[b * nc..(b + 1) * nc]);
        total = total + per_sample_loss(objective, pass.logits_of(b), o, x.label.index()).0;
    }
    Ok(total / lit(batch.len() as f64))
}

/// Mean loss, its gradient for the tensors in `scope`, and the forward cache.
pub fn loss_and_gradients<T: Real>(
    params: &ModelParams<T>,
    batch: &[&TrialWindow],
    objective: &Objective<'_, T>,
    scope: Scope,
) -> Result<(T, Gradients<T>, ForwardPass<T>)> {
    loss_and_gradients_in(params, batch, objective, scope, mode_for(scope, false))
}

/// [`loss_and_gradients`] with an explicit forward mode.
pub fn loss_and_gradients_in<T: Real>(
    params: &ModelParams<T>,
    batch: &[&TrialWindow],
    objective: &Objective<'_, T>,
    scope: Scope,
    mode: Mode,
) -> Result<(T, Gradients<T>, ForwardPass<T>)> {
    let pass = forward_batch(params, batch, mode)?;
    let old = teacher_logits(objective, batch)?;
    let nc = params.arch.n_classes;
    let inv_b: T = lit(1.0 / batch.len() as f64);
    let mut total = T::zero();
    let mut dlogits = Vec::with_capacity(batch.len() * nc);
    for (b, x) in batch.iter().enumerate() {
        let o = old.as_ref().map(|v| &v[b * nc..(b + 1) * nc]);
        let (l, g) = per_sample_loss(objective, pass.logits_of(b), o, x.label.index());
        total = total + l;
        dlogits.extend(g.into_iter().map(|v| v * inv_b));
    }
    let grads = backward(params, batch, &pass, &dlogits, scope);
    Ok((total * inv_b, grads, pass))
}

/// First-order optimizer state over the trainable tensors.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f32,
    t: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr: lr as f32,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn apply(&mut self, params: &mut ModelParams<f32>, grads: &Gradients<f32>, scope: Scope) {
        let range = scope.tensor_range();
        let tensors = params.trainable_mut();
        match self.kind {
            OptimizerKind::Sgd => {
                for i in range {
                    for (p, &g) in tensors[i].iter_mut().zip(&grads.tensors[i]) {
                        *p -= self.lr * g;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.m.is_empty() {
                    self.m = grads.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
                    self.v = self.m.clone();
                }
                self.t += 1;
                let (b1, b2, eps) = (beta1 as f32, beta2 as f32, eps as f32);
                let c1 = 1.0 - b1.powi(self.t);
                let c2 = 1.0 - b2.powi(self.t);
                for i in range {
                    let (m, v) = (&mut self.m[i], &mut self.v[i]);
                    for (j, p) in tensors[i].iter_mut().enumerate() {
                        let g = grads.tensors[i][j];
                        m[j] = b1 * m[j] + (1.0 - b1) * g;
                        v[j] = b2 * v[j] + (1.0 - b2) * g * g;
                        let mhat = m[j] / c1;
                        let vhat = v[j] / c2;
                        *p -= self.lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// Parameters plus optimizer state for a sequence of steps.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub params: ModelParams,
    optimizer: Optimizer,
    scope: Scope,
    mode: Mode,
    steps: usize,
}

impl Trainer {
    pub fn new(params: ModelParams, cfg: &TrainConfig) -> Self {
        Trainer {
            params,
            optimizer: Optimizer::new(cfg.optimizer, cfg.lr),
            scope: cfg.scope,
            mode: mode_for(cfg.scope, cfg.frozen_bn),
            steps: 0,
        }
    }

    /// Optimizer steps taken so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One optimizer update on the mean loss of `batch`. Returns that loss.
    pub fn step(&mut self, batch: &[&TrialWindow], objective: &Objective<'_>) -> Result<f32> {
        if batch.is_empty() {
            return Err(Error::Contract("training step on an empty batch".into()));
        }
        let (loss, grads, pass) = loss_and_gradients_in(&self.params, batch, objective, self.scope, self.mode)?;
        if !loss.is_finite() {
            return Err(Error::training(self.steps, format!("loss is {loss}")));
        }
        if !grads.is_finite() {
            return Err(Error::training(self.steps, "non-finite gradient"));
        }
        self.optimizer.apply(&mut self.params, &grads, self.scope);
        if self.mode == Mode::Train {
            update_running_stats(&mut self.params, &pass);
        }
        self.steps += 1;
        Ok(loss)
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }
}

/// A single update from fresh optimizer state.
pub fn train_step(params: &ModelParams, batch: &[&TrialWindow], cfg: &TrainConfig) -> Result<(ModelParams, f32)> {
    cfg.validate()?;
    let mut t = Trainer::new(params.clone(), cfg);
    let loss = t.step(batch, &Objective::CrossEntropy)?;
    Ok((t.into_params(), loss))
}

/// Epoch-based minibatch training with plain cross-entropy. Returns the
/// trained parameters and the mean loss of every epoch.
pub fn fit(params: ModelParams, trials: &[TrialWindow], cfg: &TrainConfig) -> Result<(ModelParams, Vec<f32>)> {
    cfg.validate()?;
    if trials.is_empty() {
        return Err(Error::Contract("no training trials".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..trials.len()).collect();
    let mut trainer = Trainer::new(params, cfg);
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrialWindow> = chunk.iter().map(|&i| &trials[i]).collect();
            total += f64::from(trainer.step(&batch, &Objective::CrossEntropy)?);
            batches += 1;
        }
        history.push((total / batches as f64) as f32);
    }
    Ok((trainer.into_params(), history))
}

/// Index of the largest logit; ties go to the lower class.
pub fn argmax<T: Real>(logits: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

pub fn predict(params: &ModelParams, trial: &TrialWindow) -> Result<Label> {
    let pass = forward_batch(params, &[trial], Mode::Eval)?;
    Label::from_index(argmax(&pass.logits)).ok_or_else(|| Error::Contract("more than two classes".into()))
}

/// Fraction of trials classified correctly (Eval-mode batch norm).
pub fn evaluate(params: &ModelParams, trials: &[TrialWindow]) -> Result<f64> {
    if trials.is_empty() {
        return Err(Error::Contract("cannot evaluate on zero trials".into()));
    }
    let mut correct = 0usize;
    for t in trials {
        let pass = forward_batch(params, &[t], Mode::Eval)?;
        if argmax(&pass.logits) == t.label.index() {
            correct += 1;
        }
    }
    Ok(correct as f64 / trials.len() as f64)
}
