use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{LwfParams, OptimizerKind, Scope};

/// How a finetuning block protects earlier knowledge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Plain transfer learning on the new trials.
    #[default]
    Tl,
    /// Replay of a small reservoir of earlier trials.
    Er,
    /// Distillation toward the model as it was before the block.
    Lwf,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Tl => "tl",
            Strategy::Er => "er",
            Strategy::Lwf => "lwf",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tl" => Ok(Strategy::Tl),
            "er" => Ok(Strategy::Er),
            "lwf" => Ok(Strategy::Lwf),
            _ => Err(Error::Config(format!("unknown strategy '{s}' (expected tl, er or lwf)"))),
        }
    }
}

/// Control knobs of the train-on-request workflow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorConfig {
    /// Accuracy a subsession must reach to count as satisfactory.
    pub t_acc: f64,
    /// Trials per subsession.
    pub trls: usize,
    /// Epochs per finetuning block.
    pub eps: usize,
    pub lr_ft: f64,
    pub strategy: Strategy,
    pub scope: Scope,
    pub optimizer: OptimizerKind,
    /// Keep batch-norm statistics fixed during full-model finetuning. With
    /// one trial per step, batch statistics erase per-trial band power.
    pub frozen_bn: bool,
    pub lwf: LwfParams,
    /// Replay buffer capacity.
    pub buffer_size: usize,
    /// Offer the pretraining trials to the replay buffer before the first
    /// novel session.
    pub buffer_pretraining: bool,
    /// Seeds the replay buffer.
    pub seed: u64,
}

impl Default for TorConfig {
    fn default() -> Self {
        TorConfig {
            t_acc: 0.9,
            trls: 10,
            eps: 15,
            lr_ft: 2e-3,
            strategy: Strategy::Tl,
            scope: Scope::FullModel,
            optimizer: OptimizerKind::adam(),
            frozen_bn: true,
            lwf: LwfParams::default(),
            buffer_size: 10,
            buffer_pretraining: true,
            seed: 0,
        }
    }
}

impl TorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_acc > 0.0 && self.t_acc <= 1.0) {
            return Err(Error::Config(format!("tor.t_acc must be in (0, 1], got {}", self.t_acc)));
        }
        if self.trls == 0 {
            return Err(Error::Config("tor.trls must be at least 1".into()));
        }
        if !(self.lr_ft >= 0.0) || !self.lr_ft.is_finite() {
            return Err(Error::Config(format!("tor.lr_ft must be non-negative, got {}", self.lr_ft)));
        }
        if !(self.lwf.temperature > 0.0) || !(self.lwf.lambda >= 0.0) {
            return Err(Error::Config("lwf temperature must be positive and lambda non-negative".into()));
        }
        Ok(())
    }

    /// Number of subsessions a session of `session_len` trials splits into.
    pub fn subsessions(&self, session_len: usize) -> Result<usize> {
        if self.trls == 0 || session_len == 0 || session_len % self.trls != 0 {
            return Err(Error::Config(format!(
                "a session of {session_len} trials does not split into subsessions of {}",
                self.trls
            )));
        }
        Ok(session_len / self.trls)
    }
}
