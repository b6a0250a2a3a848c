use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Electrodes on the headband.
pub const N_CHANNELS: usize = 8;
/// Samples per trial window: 3.8 s at 500 Hz.
pub const WINDOW_SAMPLES: usize = 1900;
pub const DEFAULT_FS: u32 = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Left = 0,
    Right = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Left),
            1 => Some(Label::Right),
            _ => None,
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Left => Label::Right,
            Label::Right => Label::Left,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cue {
    /// Sample index at which the instruction appears.
    pub onset: usize,
    pub label: Label,
}

/// A continuous multi-channel recording with its cue markers.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecording {
    pub fs: u32,
    /// Channel-major samples in microvolts.
    pub channels: Vec<Vec<f32>>,
    pub cues: Vec<Cue>,
}

impl RawRecording {
    pub fn new(fs: u32, channels: Vec<Vec<f32>>, cues: Vec<Cue>) -> Result<Self> {
        let rec = RawRecording { fs, channels, cues };
        rec.validate()?;
        Ok(rec)
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks the structural invariants. The trailing-signal requirement is
    /// enforced by [`extract_trials`] so that truncated recordings can still
    /// be filtered.
    pub fn validate(&self) -> Result<()> {
        if self.fs == 0 {
            return Err(Error::Parameter("sampling rate must be positive".into()));
        }
        let n = self.len();
        for (c, ch) in self.channels.iter().enumerate() {
            if ch.len() != n {
                return Err(Error::ingestion(
                    c as u64,
                    format!("channel {c} has {} samples, expected {n}", ch.len()),
                ));
            }
            if let Some(i) = ch.iter().position(|v| !v.is_finite()) {
                return Err(Error::ingestion(
                    i as u64,
                    format!("non-finite sample on channel {c}"),
                ));
            }
        }
        for (i, w) in self.cues.windows(2).enumerate() {
            if w[1].onset <= w[0].onset {
                return Err(Error::ingestion(
                    (i + 1) as u64,
                    "cue onsets must be strictly increasing",
                ));
            }
        }
        Ok(())
    }

    /// Applies `f` to every channel, keeping cues and rate.
    pub(crate) fn map_channels(&self, mut f: impl FnMut(&[f32]) -> Vec<f32>) -> RawRecording {
        RawRecording {
            fs: self.fs,
            channels: self.channels.iter().map(|ch| f(ch)).collect(),
            cues: self.cues.clone(),
        }
    }
}

/// One labelled trial, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialWindow {
    n_channels: usize,
    n_samples: usize,
    data: Vec<f32>,
    pub label: Label,
    pub session_id: u32,
    pub trial_index: u32,
}

impl TrialWindow {
    pub fn new(
        n_channels: usize,
        n_samples: usize,
        data: Vec<f32>,
        label: Label,
        session_id: u32,
        trial_index: u32,
    ) -> Result<Self> {
        if n_channels == 0 || n_samples == 0 || data.len() != n_channels * n_samples {
            return Err(Error::Contract(format!(
                "trial data has {} values, expected {n_channels}x{n_samples}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::ingestion(
                i as u64,
                format!("non-finite value in trial {trial_index}"),
            ));
        }
        Ok(TrialWindow {
            n_channels,
            n_samples,
            data,
            label,
            session_id,
            trial_index,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * self.n_samples..(c + 1) * self.n_samples]
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }
}

/// Cuts one window of `WINDOW_SAMPLES` samples starting at every cue onset.
pub fn extract_trials(rec: &RawRecording, session_id: u32) -> Result<Vec<TrialWindow>> {
    extract_trials_with_len(rec, session_id, WINDOW_SAMPLES)
}

pub fn extract_trials_with_len(
    rec: &RawRecording,
    session_id: u32,
    window: usize,
) -> Result<Vec<TrialWindow>> {
    rec.validate()?;
    let n = rec.len();
    let mut out = Vec::with_capacity(rec.cues.len());
    for (i, cue) in rec.cues.iter().enumerate() {
        let end = cue.onset + window;
        if end > n {
            return Err(Error::ingestion(
                i as u64,
                format!(
                    "cue {i} at sample {} has {} trailing samples, {window} required",
                    cue.onset,
                    n.saturating_sub(cue.onset)
                ),
            ));
        }
        let mut data = Vec::with_capacity(rec.n_channels() * window);
        for ch in &rec.channels {
            data.extend_from_slice(&ch[cue.onset..end]);
        }
        out.push(TrialWindow::new(
            rec.n_channels(),
            window,
            data,
            cue.label,
            session_id,
            i as u32,
        )?);
    }
    Ok(out)
}
