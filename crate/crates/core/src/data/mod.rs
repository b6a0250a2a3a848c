//! Synthetic multi-session data and session file formats.

mod csv_import;
mod generator;
pub mod session_file;

pub use csv_import::{import_csv, import_csv_from};
pub use generator::{
    generate_dataset, generate_dataset_with, generate_recording, session_drift, session_labels, Dataset, DriftSpec,
    GeneratorSpec, SessionDrift,
};
pub use session_file::{read_session, read_session_from, write_session, write_session_to};

use crate::dsp::TrialWindow;
use crate::error::{Error, Result};

/// One session's preprocessed trials in acquisition order.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionRecord {
    pub fs: u32,
    pub trials: Vec<TrialWindow>,
}

impl SessionRecord {
    /// Common `(channels, samples)` of every trial.
    pub fn shape(&self) -> Result<(usize, usize)> {
        let Some(first) = self.trials.first() else {
            return Err(Error::Contract("session has no trials".into()));
        };
        let shape = (first.n_channels(), first.n_samples());
        if self.trials.iter().any(|t| (t.n_channels(), t.n_samples()) != shape) {
            return Err(Error::Contract("trials in a session must share one shape".into()));
        }
        Ok(shape)
    }
}
