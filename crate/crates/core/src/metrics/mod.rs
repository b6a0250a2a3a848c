//! Accuracy summaries, information transfer rate and cost roll-ups.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::{ChainSession, SessionLog};
use crate::quant::{estimate_cost, CostModel};

/// Wolpaw information transfer rate in bits per minute for accuracy `p`,
/// `n` classes and `t_dec` seconds per decision.
pub fn wolpaw_itr(p: f64, n: usize, t_dec: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("ITR needs at least two classes, got {n}")));
    }
    if !(t_dec > 0.0) {
        return Err(Error::Domain(format!("decision time must be positive, got {t_dec}")));
    }
    let nf = n as f64;
    if !(p >= 1.0 / nf - 1e-12 && p <= 1.0) {
        return Err(Error::Domain(format!("ITR is undefined for accuracy {p} with {n} classes")));
    }
    let mut bits = nf.log2();
    if p > 0.0 {
        bits += p * p.log2();
    }
    if p < 1.0 {
        bits += (1.0 - p) * ((1.0 - p) / (nf - 1.0)).log2();
    }
    Ok(bits.max(0.0) * 60.0 / t_dec)
}

/// Settings for [`aggregate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReportConfig {
    pub n_classes: usize,
    pub t_dec_s: f64,
    /// The summary row averages accuracy and ITR over this many final sessions.
    pub last_sessions: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            n_classes: 2,
            t_dec_s: 4.0,
            last_sessions: 3,
        }
    }
}

/// One session of one run, reduced to what the report needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub strategy: String,
    pub seed: u64,
    pub session: usize,
    pub accuracy: Option<f64>,
    pub train_trials: usize,
    pub train_steps: usize,
}

impl From<&SessionLog> for SessionOutcome {
    fn from(l: &SessionLog) -> Self {
        SessionOutcome {
            strategy: l.run.strategy.clone(),
            seed: l.run.seed,
            session: l.session,
            accuracy: l.mean_tested_accuracy(),
            train_trials: l.train_trials,
            train_steps: l.train_steps,
        }
    }
}

impl SessionOutcome {
    pub fn from_chain(strategy: &str, seed: u64, c: &ChainSession) -> Self {
        SessionOutcome {
            strategy: strategy.to_string(),
            seed,
            session: c.session,
            accuracy: Some(c.accuracy),
            train_trials: c.train_trials,
            train_steps: c.steps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    /// One run, one session.
    Detail,
    /// One session averaged over runs.
    Mean,
    /// Whole workflow averaged over runs.
    Summary,
}

impl RowKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RowKind::Detail => "detail",
            RowKind::Mean => "mean",
            RowKind::Summary => "summary",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub kind: RowKind,
    pub strategy: String,
    pub seed: Option<u64>,
    pub session: Option<usize>,
    /// Runs contributing to the row.
    pub runs: usize,
    /// Mean tested accuracy; absent when nothing was tested. On the summary
    /// row, the mean over the final sessions.
    pub accuracy: Option<f64>,
    /// Training trials per run.
    pub train_trials: f64,
    /// Training trials summed over the contributing runs.
    pub total_train_trials: usize,
    pub acquisition_min: f64,
    pub energy_mj: f64,
    /// ITR of the row's accuracy.
    pub itr_bits_min: Option<f64>,
    /// Summary row only: mean of the per-session ITR over the final sessions.
    pub mean_itr_bits_min: Option<f64>,
}

fn mean(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Builds the report from session logs: detail rows per (strategy, seed,
/// session), mean rows per (strategy, session) and one summary row per
/// strategy. Output order does not depend on input order.
pub fn aggregate(logs: &[SessionLog], cost: &CostModel, cfg: &ReportConfig) -> Vec<ReportRow> {
    let outcomes: Vec<SessionOutcome> = logs.iter().map(SessionOutcome::from).collect();
    aggregate_outcomes(&outcomes, cost, cfg)
}

pub fn aggregate_outcomes(outcomes: &[SessionOutcome], cost: &CostModel, cfg: &ReportConfig) -> Vec<ReportRow> {
    let itr = |a: Option<f64>| a.and_then(|p| wolpaw_itr(p, cfg.n_classes, cfg.t_dec_s).ok());

    // (strategy, seed, session) -> outcome; duplicates are merged.
    let mut detail: BTreeMap<(String, u64, usize), (Vec<f64>, usize, usize)> = BTreeMap::new();
    for o in outcomes {
        let e = detail.entry((o.strategy.clone(), o.seed, o.session)).or_default();
        e.0.extend(o.accuracy);
        e.1 += o.train_trials;
        e.2 += o.train_steps;
    }

    let mut rows = Vec::new();
    let mut per_session: BTreeMap<(String, usize), Vec<(Option<f64>, usize, usize)>> = BTreeMap::new();
    for ((strategy, seed, session), (acc, trials, steps)) in &detail {
        let accuracy = mean(acc.iter().copied());
        let c = estimate_cost(*steps, *trials, cost);
        rows.push(ReportRow {
            kind: RowKind::Detail,
            strategy: strategy.clone(),
            seed: Some(*seed),
            session: Some(*session),
            runs: 1,
            accuracy,
            train_trials: *trials as f64,
            total_train_trials: *trials,
            acquisition_min: c.acquisition_min,
            energy_mj: c.energy_mj,
            itr_bits_min: itr(accuracy),
            mean_itr_bits_min: None,
        });
        per_session
            .entry((strategy.clone(), *session))
            .or_default()
            .push((accuracy, *trials, *steps));
    }

    let mut per_strategy: BTreeMap<String, Vec<ReportRow>> = BTreeMap::new();
    for ((strategy, session), runs) in &per_session {
        let n = runs.len();
        let total: usize = runs.iter().map(|r| r.1).sum();
        let steps: usize = runs.iter().map(|r| r.2).sum();
        let accuracy = mean(runs.iter().filter_map(|r| r.0));
        let c = estimate_cost(steps, total, cost);
        let row = ReportRow {
            kind: RowKind::Mean,
            strategy: strategy.clone(),
            seed: None,
            session: Some(*session),
            runs: n,
            accuracy,
            train_trials: total as f64 / n as f64,
            total_train_trials: total,
            acquisition_min: c.acquisition_min / n as f64,
            energy_mj: c.energy_mj / n as f64,
            itr_bits_min: itr(accuracy),
            mean_itr_bits_min: None,
        };
        per_strategy.entry(strategy.clone()).or_default().push(row.clone());
        rows.push(row);
    }

    for (strategy, mean_rows) in &per_strategy {
        let runs = detail.keys().filter(|k| &k.0 == strategy).map(|k| k.1).collect::<std::collections::BTreeSet<_>>().len();
        let total: usize = mean_rows.iter().map(|r| r.total_train_trials).sum();
        let energy: f64 = mean_rows.iter().map(|r| r.energy_mj).sum();
        let last = &mean_rows[mean_rows.len().saturating_sub(cfg.last_sessions)..];
        let accuracy = mean(last.iter().filter_map(|r| r.accuracy));
        let per_run = total as f64 / runs.max(1) as f64;
        rows.push(ReportRow {
            kind: RowKind::Summary,
            strategy: strategy.clone(),
            seed: None,
            session: None,
            runs,
            accuracy,
            train_trials: per_run,
            total_train_trials: total,
            acquisition_min: cost.acquisition_min(total) / runs.max(1) as f64,
            energy_mj: energy,
            itr_bits_min: itr(accuracy),
            mean_itr_bits_min: mean(last.iter().filter_map(|r| r.itr_bits_min)),
        });
    }
    rows.sort_by(|a, b| (&a.strategy, a.kind, a.seed, a.session).cmp(&(&b.strategy, b.kind, b.seed, b.session)));
    rows
}

pub const REPORT_HEADER: [&str; 12] = [
    "kind",
    "strategy",
    "seed",
    "session",
    "runs",
    "accuracy",
    "train_trials",
    "total_train_trials",
    "acq_min",
    "energy_mJ",
    "itr_bits_min",
    "mean_itr_bits_min",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fixed(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_default()
}

/// Writes the report as CSV; absent values are empty fields.
pub fn write_report_csv<W: Write>(rows: &[ReportRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(REPORT_HEADER)?;
    for r in rows {
        out.write_record([
            r.kind.as_str().to_string(),
            r.strategy.clone(),
            opt(r.seed),
            opt(r.session),
            r.runs.to_string(),
            fixed(r.accuracy, 4),
            format!("{:.2}", r.train_trials),
            r.total_train_trials.to_string(),
            format!("{:.3}", r.acquisition_min),
            format!("{:.2}", r.energy_mj),
            fixed(r.itr_bits_min, 3),
            fixed(r.mean_itr_bits_min, 3),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the report as a JSON array mirroring the CSV rows.
pub fn write_report_json<W: Write>(rows: &[ReportRow], mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, rows)?;
    w.write_all(b"\n")?;
    Ok(())
}
