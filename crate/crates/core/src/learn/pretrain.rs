use crate::dsp::{Label, TrialWindow};
use crate::error::{Error, Result};
use crate::net::{fit, ArchSpec, ModelParams, TrainConfig};

/// Trains a fresh network on the first session: 40 epochs at 1e-3.
pub fn pretrain(session1: &[TrialWindow], seed: u64) -> Result<ModelParams> {
    pretrain_with(session1, ArchSpec::default(), &TrainConfig::pretrain(seed))
}

/// Pretraining with explicit settings. Zero epochs returns the initialization.
pub fn pretrain_with(session1: &[TrialWindow], arch: ArchSpec, cfg: &TrainConfig) -> Result<ModelParams> {
    let has = |l: Label| session1.iter().any(|t| t.label == l);
    if !has(Label::Left) || !has(Label::Right) {
        return Err(Error::Config("pretraining data must contain both classes".into()));
    }
    let init = ModelParams::init(arch, cfg.seed)?;
    if cfg.epochs == 0 {
        return Ok(init);
    }
    Ok(fit(init, session1, cfg)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trials(labels: &[Label]) -> Vec<TrialWindow> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| TrialWindow::new(8, 1900, vec![i as f32; 8 * 1900], l, 1, i as u32).unwrap())
            .collect()
    }

    #[test]
    fn single_class_is_rejected() {
        let err = pretrain(&trials(&[Label::Left; 4]), 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::pretrain(5)
        };
        let p = pretrain_with(&trials(&[Label::Left, Label::Right]), ArchSpec::default(), &cfg).unwrap();
        assert_eq!(p, ModelParams::init(ArchSpec::default(), 5).unwrap());
    }
}
