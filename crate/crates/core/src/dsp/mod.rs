//! Preprocessing of continuous recordings into trial windows.
//!
//! The chain is band-pass, then notch, then moving-average baseline
//! correction, all applied to the continuous recording before epoching so
//! that filter start-up transients stay outside the trials.

mod detrend;
mod filter;
mod recording;

pub use detrend::{centered_mean, moving_average, moving_average_detrend, window_len, MovingAverageMode};
pub use filter::{apply_filter, design_bandpass, design_notch, Biquad, BiquadCascade};
pub use recording::{
    extract_trials, extract_trials_with_len, Cue, Label, RawRecording, TrialWindow, DEFAULT_FS,
    N_CHANNELS, WINDOW_SAMPLES,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub bandpass_low_hz: f64,
    pub bandpass_high_hz: f64,
    pub bandpass_order: usize,
    pub notch_hz: f64,
    pub notch_q: f64,
    pub moving_average_s: f64,
    pub moving_average: MovingAverageMode,
    pub window_samples: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            bandpass_low_hz: 0.5,
            bandpass_high_hz: 100.0,
            bandpass_order: 4,
            notch_hz: 50.0,
            notch_q: 30.0,
            moving_average_s: 0.25,
            moving_average: MovingAverageMode::Subtract,
            window_samples: WINDOW_SAMPLES,
        }
    }
}

impl PreprocessConfig {
    pub fn cascade(&self, fs: u32) -> Result<BiquadCascade> {
        let fs = f64::from(fs);
        design_bandpass(fs, self.bandpass_low_hz, self.bandpass_high_hz, self.bandpass_order)?
            .then(&design_notch(fs, self.notch_hz, self.notch_q)?)
    }

    /// Filters the continuous recording without epoching it.
    pub fn filter(&self, rec: &RawRecording) -> Result<RawRecording> {
        rec.validate()?;
        let filtered = apply_filter(&self.cascade(rec.fs)?, rec);
        moving_average(&filtered, self.moving_average_s, self.moving_average)
    }

    pub fn run(&self, rec: &RawRecording, session_id: u32) -> Result<Vec<TrialWindow>> {
        extract_trials_with_len(&self.filter(rec)?, session_id, self.window_samples)
    }
}
