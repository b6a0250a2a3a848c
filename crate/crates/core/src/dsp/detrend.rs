use serde::{Deserialize, Serialize};

use super::recording::RawRecording;
use crate::error::{Error, Result};

/// What the moving-average stage does with its running mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MovingAverageMode {
    /// Subtract the local mean (baseline correction).
    #[default]
    Subtract,
    /// Replace each sample by the local mean.
    Smooth,
    Off,
}

impl std::str::FromStr for MovingAverageMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subtract" => Ok(Self::Subtract),
            "smooth" => Ok(Self::Smooth),
            "off" => Ok(Self::Off),
            _ => Err(Error::Config(format!("unknown moving-average mode '{s}'"))),
        }
    }
}

/// Number of samples covered by a window of `window_s` seconds.
pub fn window_len(fs: u32, window_s: f64) -> Result<usize> {
    let len = (window_s * f64::from(fs)).floor();
    if !(len >= 1.0) {
        return Err(Error::Parameter(format!(
            "moving-average window of {window_s} s at {fs} Hz covers no samples"
        )));
    }
    Ok(len as usize)
}

/// Centered moving mean of `x` over `len` samples. Near the edges the window
/// is clipped to the available samples.
pub fn centered_mean(x: &[f32], len: usize) -> Vec<f64> {
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0f64);
    let mut acc = 0.0f64;
    for &v in x {
        acc += f64::from(v);
        prefix.push(acc);
    }
    let left = len / 2;
    let right = len - 1 - left;
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(left);
            let hi = (t + right + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

pub fn moving_average_detrend(rec: &RawRecording, window_s: f64) -> Result<RawRecording> {
    moving_average(rec, window_s, MovingAverageMode::Subtract)
}

pub fn moving_average(rec: &RawRecording, window_s: f64, mode: MovingAverageMode) -> Result<RawRecording> {
    let len = window_len(rec.fs, window_s)?;
    Ok(match mode {
        MovingAverageMode::Off => rec.clone(),
        MovingAverageMode::Subtract => rec.map_channels(|ch| {
            let mean = centered_mean(ch, len);
            ch.iter()
                .zip(mean)
                .map(|(&v, m)| (f64::from(v) - m) as f32)
                .collect()
        }),
        MovingAverageMode::Smooth => {
            rec.map_channels(|ch| centered_mean(ch, len).into_iter().map(|m| m as f32).collect())
        }
    })
}
