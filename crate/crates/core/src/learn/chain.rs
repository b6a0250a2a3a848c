use serde::Serialize;

use super::config::{Strategy, TorConfig};
use super::state::{finetune_trials, WorkflowState};
use crate::dsp::TrialWindow;
use crate::error::{Error, Result};
use crate::quant::{estimate_cost, CostEstimate, CostModel};

/// Result of one session of the chain transfer-learning baseline.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainSession {
    pub session: usize,
    pub train_trials: usize,
    pub test_trials: usize,
    pub accuracy: f64,
    pub steps: usize,
    pub cost: CostEstimate,
}

/// Number of leading trials used for training under `split`.
pub fn split_point(n_trials: usize, split: f64) -> Result<usize> {
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::Config(format!("split must lie in (0, 1), got {split}")));
    }
    // Guard against 0.6 * 100 landing just below 60.
    let k = (split * n_trials as f64 + 1e-9).floor() as usize;
    if k == 0 || k >= n_trials {
        return Err(Error::Config(format!(
            "split {split} of {n_trials} trials leaves an empty training or test set"
        )));
    }
    Ok(k)
}

/// Chain transfer learning: in every session, finetune on the leading
/// `split` fraction (per-trial steps, `cfg.eps` epochs, plain
/// cross-entropy) and test on the rest; the model carries over.
pub fn chain_tl<S: AsRef<[TrialWindow]>>(
    state: &mut WorkflowState,
    sessions: &[S],
    first_session: usize,
    split: f64,
    cfg: &TorConfig,
    cost: &CostModel,
) -> Result<Vec<ChainSession>> {
    cfg.validate()?;
    let tl = TorConfig {
        strategy: Strategy::Tl,
        ..cfg.clone()
    };
    let mut out = Vec::with_capacity(sessions.len());
    for (k, s) in sessions.iter().enumerate() {
        let trials = s.as_ref();
        let n_train = split_point(trials.len(), split)?;
        let (train, test) = trials.split_at(n_train);
        state.session = first_session + k;
        let report = finetune_trials(state, train, &tl)?;
        out.push(ChainSession {
            session: first_session + k,
            train_trials: n_train,
            test_trials: test.len(),
            accuracy: state.model.evaluate(test)?,
            steps: report.steps,
            cost: estimate_cost(report.steps, n_train, cost),
        });
    }
    Ok(out)
}
