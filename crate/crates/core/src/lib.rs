//! Train-on-request continual learning for two-class EEG motor-movement
//! decoding.
//!
//! The crate covers the whole loop: preprocessing of raw recordings
//! ([`dsp`]), a compact depthwise-separable CNN with exact gradients
//! ([`net`]), an 8-bit backbone with a float head for on-device training
//! ([`quant`]), the threshold-triggered adaptation workflow with transfer
//! learning, experience replay and learning without forgetting ([`learn`]),
//! synthetic multi-session data and file formats ([`data`]), and reporting
//! ([`metrics`]).

pub mod data;
pub mod dsp;
pub mod error;
pub mod experiment;
pub mod learn;
pub mod metrics;
pub mod net;
pub mod quant;

pub use error::{Error, Result};
