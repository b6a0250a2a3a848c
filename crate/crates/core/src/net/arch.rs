use serde::{Deserialize, Serialize};

use crate::dsp::{N_CHANNELS, WINDOW_SAMPLES};
use crate::error::{Error, Result};

/// Shape of the compact depthwise-separable EEG network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchSpec {
    pub n_channels: usize,
    pub n_samples: usize,
    /// Feature maps carried through every block.
    pub n_filters: usize,
    pub temporal_kernel: usize,
    pub ds_kernel: usize,
    pub pool1: usize,
    pub pool2: usize,
    pub n_classes: usize,
}

impl Default for ArchSpec {
    fn default() -> Self {
        ArchSpec {
            n_channels: N_CHANNELS,
            n_samples: WINDOW_SAMPLES,
            n_filters: 32,
            temporal_kernel: 128,
            ds_kernel: 16,
            pool1: 8,
            pool2: 8,
            n_classes: 2,
        }
    }
}

impl ArchSpec {
    /// Time steps after the first pooling stage.
    pub fn pooled1(&self) -> usize {
        self.n_samples / self.pool1
    }

    /// Time steps after the second pooling stage.
    pub fn pooled2(&self) -> usize {
        self.pooled1() / self.pool2
    }

    pub fn feature_dim(&self) -> usize {
        self.n_filters * self.pooled2()
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.n_channels,
            self.n_samples,
            self.n_filters,
            self.temporal_kernel,
            self.ds_kernel,
            self.pool1,
            self.pool2,
        ];
        if fields.iter().any(|&v| v == 0) {
            return Err(Error::Config(format!("architecture has a zero-sized dimension: {self:?}")));
        }
        if self.n_classes < 2 {
            return Err(Error::Config("at least two classes are required".into()));
        }
        if self.pooled2() == 0 {
            return Err(Error::Config(format!(
                "{} samples do not survive pooling by {}x{}",
                self.n_samples, self.pool1, self.pool2
            )));
        }
        Ok(())
    }
}
