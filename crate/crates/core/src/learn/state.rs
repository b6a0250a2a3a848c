use std::sync::Arc;

use super::config::{Strategy, TorConfig};
use super::replay::ReplayBuffer;
use crate::dsp::TrialWindow;
use crate::error::{Error, Result};
use crate::net::{
    argmax, forward_batch, loss_ce_grad, lwf_loss_grad, HeadParams, Mode, ModelParams, Objective, TrainConfig,
    Trainer,
};
use crate::quant::{calibrate_quantize, head_sgd_step, qforward, QuantBackbone};

/// Frozen 8-bit backbone with a float head trained by plain SGD.
#[derive(Clone, Debug, PartialEq)]
pub struct OdlModel {
    pub backbone: Arc<QuantBackbone>,
    pub head: HeadParams,
}

impl OdlModel {
    /// Quantizes the backbone of `params` (calibrated on `calib`) and keeps its head.
    pub fn from_params(params: &ModelParams, calib: &[TrialWindow]) -> Result<Self> {
        Ok(OdlModel {
            backbone: Arc::new(calibrate_quantize(params, calib)?),
            head: params.head.clone(),
        })
    }

    pub fn features(&self, x: &TrialWindow) -> Result<Vec<f32>> {
        qforward(&self.backbone, x)
    }
}

/// The model a workflow adapts.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Float(ModelParams),
    Odl(OdlModel),
}

impl Model {
    pub fn logits(&self, x: &TrialWindow) -> Result<Vec<f32>> {
        match self {
            Model::Float(p) => Ok(forward_batch(p, &[x], Mode::Eval)?.logits),
            Model::Odl(m) => Ok(m.head.logits(&m.features(x)?)),
        }
    }

    /// Fraction of `trials` whose largest logit matches the label.
    pub fn evaluate(&self, trials: &[TrialWindow]) -> Result<f64> {
        if trials.is_empty() {
            return Err(Error::Contract("cannot evaluate on zero trials".into()));
        }
        let mut correct = 0;
        for t in trials {
            if argmax(&self.logits(t)?) == t.label.index() {
                correct += 1;
            }
        }
        Ok(correct as f64 / trials.len() as f64)
    }

    pub fn head(&self) -> &HeadParams {
        match self {
            Model::Float(p) => &p.head,
            Model::Odl(m) => &m.head,
        }
    }
}

/// Everything a workflow carries from one subsession to the next.
#[derive(Clone, Debug)]
pub struct WorkflowState {
    pub model: Model,
    pub buffer: ReplayBuffer<TrialWindow>,
    /// Model as it was before the latest finetuning block (distillation teacher).
    pub snapshot: Option<Model>,
    /// Sessions started so far.
    pub session: usize,
}

impl WorkflowState {
    pub fn new(model: Model, cfg: &TorConfig) -> Self {
        WorkflowState {
            model,
            buffer: ReplayBuffer::new(cfg.buffer_size, cfg.seed),
            snapshot: None,
            session: 0,
        }
    }

    /// Offers already-used training trials (for example the pretraining
    /// session) to the replay buffer.
    pub fn offer(&mut self, trials: &[TrialWindow]) {
        for t in trials {
            self.buffer.reservoir_update(t.clone());
        }
    }
}

/// What one finetuning block did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockReport {
    pub steps: usize,
    /// Mean loss of the final epoch.
    pub final_loss: f32,
}

fn train_config(cfg: &TorConfig) -> TrainConfig {
    TrainConfig {
        epochs: cfg.eps,
        lr: cfg.lr_ft,
        batch_size: 1,
        scope: cfg.scope,
        optimizer: cfg.optimizer,
        seed: cfg.seed,
        shuffle: false,
        frozen_bn: cfg.frozen_bn,
    }
}

/// Finetunes on one subsession of exactly `cfg.trls` trials.
pub fn finetune_block(state: &mut WorkflowState, subsession: &[TrialWindow], cfg: &TorConfig) -> Result<BlockReport> {
    if subsession.len() != cfg.trls {
        return Err(Error::Contract(format!(
            "finetuning block has {} trials, expected {}",
            subsession.len(),
            cfg.trls
        )));
    }
    finetune_trials(state, subsession, cfg)
}

/// Finetunes on an arbitrary number of live trials with the configured
/// strategy. Every epoch visits the live trials in order, then (for
/// experience replay) the buffer contents as they were when the block began.
/// Live trials are offered to the buffer once, after the last epoch.
pub fn finetune_trials(state: &mut WorkflowState, live: &[TrialWindow], cfg: &TorConfig) -> Result<BlockReport> {
    if live.is_empty() {
        return Err(Error::Contract("finetuning needs at least one trial".into()));
    }
    let WorkflowState {
        model,
        buffer,
        snapshot,
        ..
    } = state;
    if cfg.strategy == Strategy::Lwf {
        *snapshot = Some(model.clone());
    }
    let replay: Vec<&TrialWindow> = match cfg.strategy {
        Strategy::Er => buffer.items().iter().collect(),
        _ => Vec::new(),
    };
    let order: Vec<&TrialWindow> = live.iter().chain(replay.iter().copied()).collect();

    let report = match model {
        Model::Float(params) => {
            let teacher = match (cfg.strategy, snapshot.as_ref()) {
                (Strategy::Lwf, Some(Model::Float(p))) => Some(p),
                (Strategy::Lwf, _) => return Err(Error::Contract("distillation teacher must be a float model".into())),
                _ => None,
            };
            let objective = match teacher {
                Some(teacher) => Objective::Distill {
                    teacher,
                    lwf: cfg.lwf,
                },
                None => Objective::CrossEntropy,
            };
            let mut trainer = Trainer::new(params.clone(), &train_config(cfg));
            let mut final_loss = 0.0;
            for _ in 0..cfg.eps {
                let mut total = 0.0f64;
                for x in &order {
                    total += f64::from(trainer.step(&[x], &objective)?);
                }
                final_loss = (total / order.len() as f64) as f32;
            }
            let steps = trainer.steps();
            *params = trainer.into_params();
            BlockReport { steps, final_loss }
        }
        Model::Odl(m) => {
            let feats = order.iter().map(|x| m.features(x)).collect::<Result<Vec<_>>>()?;
            let teacher: Option<Vec<Vec<f32>>> = match (cfg.strategy, snapshot.as_ref()) {
                (Strategy::Lwf, Some(Model::Odl(t))) => Some(feats.iter().map(|f| t.head.logits(f)).collect()),
                (Strategy::Lwf, _) => return Err(Error::Contract("distillation teacher must be an on-device model".into())),
                _ => None,
            };
            let lr = cfg.lr_ft as f32;
            let mut steps = 0;
            let mut final_loss = 0.0;
            for _ in 0..cfg.eps {
                let mut total = 0.0f64;
                for (k, (x, f)) in order.iter().zip(&feats).enumerate() {
                    let logits = m.head.logits(f);
                    let label = x.label.index();
                    let (loss, dlogits) = match &teacher {
                        Some(old) => {
                            let (l, t) = (cfg.lwf.lambda as f32, cfg.lwf.temperature as f32);
                            (
                                crate::net::lwf_loss(&logits, &old[k], label, l, t),
                                lwf_loss_grad(&logits, &old[k], label, l, t),
                            )
                        }
                        None => (crate::net::loss_ce(&logits, label), loss_ce_grad(&logits, label)),
                    };
                    if !loss.is_finite() {
                        return Err(Error::training(steps, format!("loss is {loss}")));
                    }
                    head_sgd_step(&mut m.head, f, &dlogits, lr);
                    if !m.head.is_finite() {
                        return Err(Error::training(steps, "head diverged"));
                    }
                    total += f64::from(loss);
                    steps += 1;
                }
                final_loss = (total / order.len() as f64) as f32;
            }
            BlockReport { steps, final_loss }
        }
    };

    if cfg.strategy == Strategy::Er {
        for t in live {
            buffer.reservoir_update(t.clone());
        }
    }
    Ok(report)
}
