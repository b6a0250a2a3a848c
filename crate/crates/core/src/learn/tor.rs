use std::io::Write;

use serde::Serialize;

use super::config::TorConfig;
use super::state::{finetune_block, WorkflowState};
use crate::dsp::TrialWindow;
use crate::error::{Error, Result};
use crate::quant::{estimate_cost, CostEstimate, CostModel};

/// What the workflow does with a model: measure a subsession and train on one.
pub trait Adapter {
    type Trial;

    fn accuracy(&mut self, subsession: &[Self::Trial]) -> Result<f64>;

    /// Finetunes on `subsession`; returns the number of optimizer steps.
    fn train(&mut self, subsession: &[Self::Trial], cfg: &TorConfig) -> Result<usize>;

    fn begin_session(&mut self, _session: usize) {}
}

impl Adapter for WorkflowState {
    type Trial = TrialWindow;

    fn accuracy(&mut self, subsession: &[TrialWindow]) -> Result<f64> {
        self.model.evaluate(subsession)
    }

    fn train(&mut self, subsession: &[TrialWindow], cfg: &TorConfig) -> Result<usize> {
        Ok(finetune_block(self, subsession, cfg)?.steps)
    }

    fn begin_session(&mut self, session: usize) {
        self.session = session;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Tested,
    UsedForTraining,
    /// Never reached because the session was aborted.
    Skipped,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Tested => "tested",
            Role::UsedForTraining => "used_for_training",
            Role::Skipped => "skipped",
        }
    }
}

/// One subsession's entry in the audit trail. Cumulative fields count from
/// the start of the session.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubsessionRecord {
    /// 1-based position within the session.
    pub index: usize,
    pub role: Role,
    pub accuracy: Option<f64>,
    /// This tested subsession fell below the threshold and the next one was
    /// used for training.
    pub trigger: bool,
    pub steps: usize,
    pub cum_train_trials: usize,
    pub cum_steps: usize,
    pub cum_cost: CostEstimate,
}

/// Identifies a run in logs and reports.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunInfo {
    pub run_id: String,
    pub strategy: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SessionLog {
    pub run: RunInfo,
    pub session: usize,
    pub trls: usize,
    pub records: Vec<SubsessionRecord>,
    pub triggers: usize,
    pub train_trials: usize,
    pub train_steps: usize,
    pub cost: CostEstimate,
    /// False when training failed part-way through the session.
    pub complete: bool,
}

impl SessionLog {
    /// Mean accuracy over the tested subsessions; `None` if none was tested.
    pub fn mean_tested_accuracy(&self) -> Option<f64> {
        let acc: Vec<f64> = self.records.iter().filter_map(|r| r.accuracy).collect();
        (!acc.is_empty()).then(|| acc.iter().sum::<f64>() / acc.len() as f64)
    }

    pub fn tested(&self) -> impl Iterator<Item = usize> + '_ {
        self.records.iter().filter(|r| r.role == Role::Tested).map(|r| r.index)
    }

    pub fn trained(&self) -> impl Iterator<Item = usize> + '_ {
        self.records.iter().filter(|r| r.role == Role::UsedForTraining).map(|r| r.index)
    }
}

/// A workflow stopped by a training failure, with the logs written so far
/// (the last one incomplete).
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct Aborted {
    pub logs: Vec<SessionLog>,
    pub error: Error,
}

impl From<Aborted> for Error {
    fn from(a: Aborted) -> Error {
        a.error
    }
}

/// Small tolerance so that, e.g., 9 of 10 correct meets a 0.9 threshold
/// regardless of how the ratio rounds.
const THRESHOLD_SLACK: f64 = 1e-9;

/// Runs the train-on-request loop over one session.
///
/// Subsession `i` is tested; if its accuracy is below `cfg.t_acc`, subsession
/// `i + 1` is used entirely for finetuning and testing resumes at `i + 2`. A
/// failure on the last subsession ends the session without training.
pub fn tor_session<A: Adapter>(
    adapter: &mut A,
    session: usize,
    trials: &[A::Trial],
    cfg: &TorConfig,
    cost: &CostModel,
    run: &RunInfo,
) -> std::result::Result<SessionLog, Aborted> {
    let n = cfg
        .validate()
        .and_then(|_| cfg.subsessions(trials.len()))
        .map_err(|error| Aborted { logs: Vec::new(), error })?;
    adapter.begin_session(session);
    let sub = |i: usize| &trials[i * cfg.trls..(i + 1) * cfg.trls];

    let mut log = SessionLog {
        run: run.clone(),
        session,
        trls: cfg.trls,
        records: Vec::with_capacity(n),
        triggers: 0,
        train_trials: 0,
        train_steps: 0,
        cost: CostEstimate::default(),
        complete: true,
    };
    let push = |log: &mut SessionLog, index: usize, role: Role, accuracy: Option<f64>, steps: usize| {
        log.train_steps += steps;
        if role == Role::UsedForTraining {
            log.train_trials += cfg.trls;
        }
        log.cost = estimate_cost(log.train_steps, log.train_trials, cost);
        log.records.push(SubsessionRecord {
            index: index + 1,
            role,
            accuracy,
            trigger: false,
            steps,
            cum_train_trials: log.train_trials,
            cum_steps: log.train_steps,
            cum_cost: log.cost,
        });
    };

    let mut i = 0;
    while i < n {
        let acc = match adapter.accuracy(sub(i)) {
            Ok(a) => a,
            Err(error) => return Err(abort(log, i, n, error)),
        };
        push(&mut log, i, Role::Tested, Some(acc), 0);
        if acc + THRESHOLD_SLACK >= cfg.t_acc || i + 1 == n {
            i += 1;
            continue;
        }
        match adapter.train(sub(i + 1), cfg) {
            Ok(steps) => {
                log.records[i].trigger = true;
                log.triggers += 1;
                push(&mut log, i + 1, Role::UsedForTraining, None, steps);
            }
            Err(error) => {
                let error = match error {
                    Error::Training { step, message } => {
                        Error::training(step, format!("session {session}, subsession {}: {message}", i + 2))
                    }
                    other => other,
                };
                return Err(abort(log, i + 1, n, error));
            }
        }
        i += 2;
    }
    Ok(log)
}

fn abort(mut log: SessionLog, from: usize, n: usize, error: Error) -> Aborted {
    for i in from..n {
        log.records.push(SubsessionRecord {
            index: i + 1,
            role: Role::Skipped,
            accuracy: None,
            trigger: false,
            steps: 0,
            cum_train_trials: log.train_trials,
            cum_steps: log.train_steps,
            cum_cost: log.cost,
        });
    }
    log.complete = false;
    Aborted { logs: vec![log], error }
}

/// Runs [`tor_session`] over consecutive sessions, numbered from
/// `first_session`, carrying the adapter's state forward.
pub fn tor_workflow<A: Adapter, S: AsRef<[A::Trial]>>(
    adapter: &mut A,
    sessions: &[S],
    first_session: usize,
    cfg: &TorConfig,
    cost: &CostModel,
    run: &RunInfo,
) -> std::result::Result<Vec<SessionLog>, Aborted> {
    let mut logs = Vec::with_capacity(sessions.len());
    for (k, s) in sessions.iter().enumerate() {
        match tor_session(adapter, first_session + k, s.as_ref(), cfg, cost, run) {
            Ok(log) => logs.push(log),
            Err(mut a) => {
                logs.append(&mut a.logs);
                return Err(Aborted { logs, error: a.error });
            }
        }
    }
    Ok(logs)
}

/// Totals over a workflow's sessions.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct WorkflowSummary {
    /// Mean tested accuracy of every session (absent if nothing was tested).
    pub session_accuracy: Vec<(usize, Option<f64>)>,
    pub train_trials: usize,
    pub train_steps: usize,
    pub acquisition_min: f64,
    pub energy_mj: f64,
    pub latency_s: f64,
}

pub fn summarize(logs: &[SessionLog], cost: &CostModel) -> WorkflowSummary {
    let train_trials = logs.iter().map(|l| l.train_trials).sum();
    let train_steps = logs.iter().map(|l| l.train_steps).sum();
    let c = estimate_cost(train_steps, train_trials, cost);
    WorkflowSummary {
        session_accuracy: logs.iter().map(|l| (l.session, l.mean_tested_accuracy())).collect(),
        train_trials,
        train_steps,
        acquisition_min: c.acquisition_min,
        energy_mj: c.energy_mj,
        latency_s: c.latency_s,
    }
}

pub const SESSION_LOG_HEADER: [&str; 10] = [
    "run_id",
    "session",
    "subsession",
    "role",
    "accuracy",
    "trigger",
    "cum_train_trials",
    "est_energy_mJ",
    "est_latency_s",
    "est_acq_min",
];

/// One CSV row per subsession. Accuracy is empty for untested subsessions.
pub fn write_session_logs<W: Write>(logs: &[SessionLog], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SESSION_LOG_HEADER)?;
    for log in logs {
        for r in &log.records {
            out.write_record([
                log.run.run_id.clone(),
                log.session.to_string(),
                r.index.to_string(),
                r.role.as_str().to_string(),
                r.accuracy.map(|a| format!("{a:.4}")).unwrap_or_default(),
                u8::from(r.trigger).to_string(),
                r.cum_train_trials.to_string(),
                format!("{:.3}", r.cum_cost.energy_mj),
                format!("{:.4}", r.cum_cost.latency_s),
                format!("{:.4}", r.cum_cost.acquisition_min),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Replays a fixed accuracy per subsession and counts training calls.
    struct Scripted {
        acc: Vec<f64>,
        trained: Vec<usize>,
        fail_training: bool,
    }

    impl Adapter for Scripted {
        type Trial = usize;

        fn accuracy(&mut self, s: &[usize]) -> Result<f64> {
            Ok(self.acc[s[0]])
        }

        fn train(&mut self, s: &[usize], cfg: &TorConfig) -> Result<usize> {
            if self.fail_training {
                return Err(Error::training(3, "diverged"));
            }
            self.trained.push(s[0]);
            Ok(cfg.eps * s.len())
        }
    }

    /// Session of 10 subsessions whose trials carry their subsession index.
    fn session() -> Vec<usize> {
        (0..100).map(|t| t / 10).collect()
    }

    fn run(acc: Vec<f64>) -> SessionLog {
        let mut a = Scripted {
            acc,
            trained: vec![],
            fail_training: false,
        };
        tor_session(&mut a, 2, &session(), &TorConfig::default(), &CostModel::default(), &RunInfo::default()).unwrap()
    }

    #[test]
    fn all_pass_never_trains() {
        let log = run(vec![0.9; 10]);
        assert_eq!(log.triggers, 0);
        assert_eq!(log.tested().count(), 10);
        assert_eq!(log.train_trials, 0);
        assert!((log.mean_tested_accuracy().unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn all_fail_alternates() {
        let log = run(vec![0.5; 10]);
        assert_eq!(log.tested().collect::<Vec<_>>(), vec![1, 3, 5, 7, 9]);
        assert_eq!(log.trained().collect::<Vec<_>>(), vec![2, 4, 6, 8, 10]);
        assert_eq!(log.train_trials, 50);
        assert_eq!(log.train_steps, 750);
        assert!((log.cost.acquisition_min - 50.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn single_early_failure() {
        let mut acc = vec![1.0; 10];
        acc[0] = 0.6;
        let log = run(acc);
        assert_eq!(log.train_trials, 10);
        assert!((log.cost.acquisition_min - 1.6667).abs() < 1e-4);
        assert!((log.cost.latency_s - 3.24).abs() < 1e-12);
        assert!((log.cost.energy_mj - 162.0).abs() < 1e-9);
    }

    #[test]
    fn failure_on_last_subsession_trains_nothing() {
        let mut acc = vec![1.0; 10];
        acc[9] = 0.0;
        let log = run(acc);
        assert_eq!(log.triggers, 0);
        assert_eq!(log.tested().count(), 10);
        assert!(!log.records[9].trigger);
    }

    #[test]
    fn training_failure_keeps_partial_log() {
        let mut a = Scripted {
            acc: vec![0.0; 10],
            trained: vec![],
            fail_training: true,
        };
        let err = tor_session(&mut a, 4, &session(), &TorConfig::default(), &CostModel::default(), &RunInfo::default())
            .unwrap_err();
        let log = &err.logs[0];
        assert!(!log.complete);
        assert_eq!(log.records.len(), 10);
        assert_eq!(log.records[1].role, Role::Skipped);
        assert!(matches!(err.error, Error::Training { step: 3, ref message } if message.contains("subsession 2")));
    }

    #[test]
    fn malformed_partition_is_config_error() {
        let mut a = Scripted {
            acc: vec![1.0; 10],
            trained: vec![],
            fail_training: false,
        };
        let err = tor_session(&mut a, 2, &[0usize; 95], &TorConfig::default(), &CostModel::default(), &RunInfo::default())
            .unwrap_err();
        assert!(matches!(err.error, Error::Config(_)));
    }

    #[test]
    fn csv_layout() {
        let mut acc = vec![1.0; 10];
        acc[2] = 0.3;
        let log = run(acc);
        let mut buf = Vec::new();
        write_session_logs(&[log], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 11);
        assert_eq!(lines[0], SESSION_LOG_HEADER.join(","));
        assert_eq!(lines[3], ",2,3,tested,0.3000,1,0,0.000,0.0000,0.0000");
        assert_eq!(lines[4], ",2,4,used_for_training,,0,10,162.000,3.2400,1.6667");
    }
}
