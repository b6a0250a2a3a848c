//! Full-precision depthwise-separable EEG classifier: forward pass, exact
//! reverse-mode gradients, optimizers and checkpoints.
//!
//! All numerics are generic over [`Real`] so that the same code path can be
//! run in `f64` when checking gradients against finite differences.

mod arch;
pub mod checkpoint;
pub mod kernels;
mod loss;
mod model;
mod params;
mod train;

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};

pub use arch::ArchSpec;
pub use loss::{
    distillation_term, loss_ce, loss_ce_grad, lwf_loss, lwf_loss_grad, softened_entropy, softmax, LwfParams,
};
pub use model::{
    backward, forward, forward_batch, update_running_stats, BatchStats, ForwardPass, Gradients, Mode, BN_EPS,
    BN_MOMENTUM,
};
pub use params::{BatchNorm, HeadParams, ModelParams, Scope, HEAD_START, TRAINABLE};
pub use train::{
    argmax, batch_loss, evaluate, fit, loss_and_gradients, loss_and_gradients_in, mode_for, predict, train_step, Objective, Optimizer,
    OptimizerKind, TrainConfig, Trainer,
};

/// Floating-point element type of the network.
pub trait Real: Float + FromPrimitive + Debug + Default + Send + Sync + 'static {}

impl<T: Float + FromPrimitive + Debug + Default + Send + Sync + 'static> Real for T {}
