use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-step training cost of the on-device head and per-trial acquisition time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Latency of one training step, milliseconds.
    pub t_step_ms: f64,
    /// Energy of one training step, millijoules.
    pub e_step_mj: f64,
    /// Average power while training, milliwatts.
    pub p_avg_mw: f64,
    /// Acquisition time per trial, seconds.
    pub t_trial_s: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            t_step_ms: 21.6,
            e_step_mj: 1.08,
            p_avg_mw: 50.2,
            t_trial_s: 10.0,
        }
    }
}

/// Output of [`estimate_cost`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CostEstimate {
    pub latency_s: f64,
    pub energy_mj: f64,
    pub acquisition_min: f64,
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("cost.t_step_ms", self.t_step_ms),
            ("cost.e_step_mj", self.e_step_mj),
            ("cost.p_avg_mw", self.p_avg_mw),
            ("cost.t_trial_s", self.t_trial_s),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Average power implied by the step constants, milliwatts.
    pub fn implied_power_mw(&self) -> f64 {
        self.e_step_mj / (self.t_step_ms / 1000.0)
    }

    pub fn acquisition_min(&self, n_trials: usize) -> f64 {
        n_trials as f64 * self.t_trial_s / 60.0
    }
}

/// Training latency, energy and acquisition time for the given counts.
pub fn estimate_cost(n_steps: usize, n_trials_acquired: usize, cm: &CostModel) -> CostEstimate {
    CostEstimate {
        latency_s: n_steps as f64 * cm.t_step_ms / 1000.0,
        energy_mj: n_steps as f64 * cm.e_step_mj,
        acquisition_min: cm.acquisition_min(n_trials_acquired),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_subsession_of_training() {
        let c = estimate_cost(150, 10, &CostModel::default());
        assert!((c.latency_s - 3.24).abs() < 1e-12);
        assert!((c.energy_mj - 162.0).abs() < 1e-9);
        assert!((c.acquisition_min - 10.0 / 6.0).abs() < 1e-12);
        assert_eq!(estimate_cost(0, 0, &CostModel::default()), CostEstimate::default());
    }

    #[test]
    fn power_consistency() {
        let cm = CostModel::default();
        assert!((cm.implied_power_mw() - 50.0).abs() < 1e-9);
        assert!((cm.implied_power_mw() - cm.p_avg_mw).abs() / cm.p_avg_mw < 0.01);
    }

    #[test]
    fn rejects_non_positive_constants() {
        let cm = CostModel { t_trial_s: 0.0, ..CostModel::default() };
        assert!(cm.validate().is_err());
    }
}
