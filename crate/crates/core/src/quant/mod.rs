//! Deployed configuration: batch norm folded into a frozen 8-bit backbone,
//! a float linear head trained on-device, and the training cost model.

mod backbone;
pub mod checkpoint;
mod cost;
mod fidelity;
mod fold;
mod odl;

pub use backbone::{calibrate_quantize, qforward, QParams, QTensor, QuantBackbone, MIN_CALIBRATION_TRIALS};
pub use cost::{estimate_cost, CostEstimate, CostModel};
pub use fidelity::{cosine, fidelity, Fidelity};
pub use fold::{Activations, FoldedBackbone};
pub use odl::{head_gradient, head_sgd_step, odl_step};
