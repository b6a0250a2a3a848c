//! The generator's two dials move the difficulty in the expected direction,
//! averaged over five seeds.

use tor_core::experiment::{self, ExperimentConfig};
use tor_core::learn::Model;

const SEEDS: u64 = 5;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean probe accuracy and mean session-2 accuracy of the pretrained model.
fn pretrained_accuracy(erd_depth: f64, drift_scale: f64) -> (f64, f64) {
    let mut cfg = ExperimentConfig::default();
    cfg.generator.n_sessions = 2;
    cfg.generator.erd_depth = erd_depth;
    cfg.drift_scale = drift_scale;
    // The dials concern the data; a shorter pretraining shows them as well.
    cfg.pretrain.epochs = 15;
    let (mut probe, mut next) = (Vec::new(), Vec::new());
    for seed in 0..SEEDS {
        let data = experiment::prepare(&cfg, seed).unwrap();
        let model = Model::Float(data.params.clone());
        probe.push(model.evaluate(&data.probe.as_ref().unwrap().trials).unwrap());
        next.push(model.evaluate(&data.sessions[1].trials).unwrap());
    }
    (mean(&probe), mean(&next))
}

#[test]
fn deeper_desynchronization_is_easier_to_learn() {
    let depths = [0.0, 0.25, 0.5];
    let acc: Vec<f64> = depths.iter().map(|&d| pretrained_accuracy(d, 1.0).0).collect();
    eprintln!("held-out session-1 accuracy by erd depth {depths:?}: {acc:.3?}");
    assert!(acc.windows(2).all(|w| w[1] >= w[0]), "{acc:?}");
}

#[test]
fn stronger_drift_costs_more_accuracy_in_the_next_session() {
    let scales = [0.0, 1.0, 2.0];
    let drop: Vec<f64> = scales
        .iter()
        .map(|&s| {
            let (probe, next) = pretrained_accuracy(0.5, s);
            probe - next
        })
        .collect();
    eprintln!("session-2 accuracy drop by drift scale {scales:?}: {drop:.3?}");
    assert!(drop.windows(2).all(|w| w[1] >= w[0]), "{drop:?}");
}
