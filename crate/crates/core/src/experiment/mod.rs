//! Reproducible experiment runs: data, pretraining, a workflow per seed, and
//! the artifacts (session logs, reports, checkpoints) written to disk.
//!
//! Seeds run in parallel on up to `run.workers` threads; results are always
//! collected and written in seed order, so outputs do not depend on scheduling.

mod config;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

pub use config::{Backend, ExperimentConfig, KEYS};

use crate::data::{generate_dataset_with, import_csv, read_session, write_session, SessionRecord};
use crate::error::{Error, Result};
use crate::learn::{
    chain_tl, pretrain_with, tor_workflow, write_session_logs, ChainSession, Model, OdlModel, RunInfo, SessionLog,
    Strategy, TorConfig, WorkflowState,
};
use crate::metrics::{aggregate_outcomes, write_report_csv, write_report_json, ReportRow, RowKind, SessionOutcome};
use crate::net::checkpoint::{load_params, save_params};
use crate::net::{ArchSpec, ModelParams, TrainConfig};
use crate::quant::checkpoint::save_quant;
use crate::quant::{calibrate_quantize, fidelity, Fidelity};

/// Trials used for the quantization fidelity check.
pub const FIDELITY_TRIALS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Workflow {
    Pretrain,
    ChainTl,
    Tor,
    Quantize,
}

impl Workflow {
    pub fn as_str(self) -> &'static str {
        match self {
            Workflow::Pretrain => "pretrain",
            Workflow::ChainTl => "chain-tl",
            Workflow::Tor => "tor",
            Workflow::Quantize => "quantize",
        }
    }
}

/// Sessions of one run plus its starting model.
#[derive(Clone, Debug)]
pub struct SeedData {
    pub seed: u64,
    /// Chronological; the first is the pretraining session.
    pub sessions: Vec<SessionRecord>,
    /// Held-out trials recorded under first-session conditions, if available.
    pub probe: Option<SessionRecord>,
    pub params: ModelParams,
}

impl SeedData {
    pub fn novel(&self) -> Vec<&[crate::dsp::TrialWindow]> {
        self.sessions[1..].iter().map(|s| s.trials.as_slice()).collect()
    }
}

/// Loads or generates the sessions of run `seed`.
pub fn load_sessions(cfg: &ExperimentConfig, seed: u64) -> Result<(Vec<SessionRecord>, Option<SessionRecord>)> {
    if cfg.files.is_empty() {
        let ds = generate_dataset_with(&cfg.generator_for(seed), &cfg.preprocess)?;
        return Ok((ds.sessions, Some(ds.probe)));
    }
    let sessions = cfg
        .files
        .iter()
        .enumerate()
        .map(|(k, path)| {
            let id = k as u32 + 1;
            let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
            if is_csv {
                import_csv(path, cfg.csv_fs, id)
            } else {
                read_session(path, id)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((sessions, None))
}

fn pretrain_config(cfg: &ExperimentConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..cfg.pretrain.clone()
    }
}

fn tor_config(cfg: &ExperimentConfig, seed: u64) -> TorConfig {
    TorConfig {
        seed,
        ..cfg.tor.clone()
    }
}

/// Data and the pretrained (or loaded) model for run `seed`.
pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<SeedData> {
    let (sessions, probe) = load_sessions(cfg, seed)?;
    let (n_channels, n_samples) = sessions[0].shape()?;
    let arch = ArchSpec {
        n_channels,
        n_samples,
        ..ArchSpec::default()
    };
    let params = match &cfg.checkpoint {
        Some(path) => load_params(arch, path)?,
        None => pretrain_with(&sessions[0].trials, arch, &pretrain_config(cfg, seed))?,
    };
    Ok(SeedData {
        seed,
        sessions,
        probe,
        params,
    })
}

/// The model a workflow starts from.
pub fn initial_model(cfg: &ExperimentConfig, data: &SeedData) -> Result<Model> {
    Ok(match cfg.backend {
        Backend::Float => Model::Float(data.params.clone()),
        Backend::Odl => Model::Odl(OdlModel::from_params(&data.params, &data.sessions[0].trials)?),
    })
}

/// Per-run numbers written to `summary.json`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SeedReport {
    pub seed: u64,
    pub strategy: String,
    /// Accuracy of the starting model on the pretraining session.
    pub pretrain_accuracy: Option<f64>,
    /// Probe accuracy before and after the workflow.
    pub probe_before: Option<f64>,
    pub probe_after: Option<f64>,
    /// Accuracy of the starting model on every later session, never finetuned.
    pub no_adaptation: Vec<(usize, f64)>,
    pub train_trials: usize,
    pub train_steps: usize,
    /// Quantized vs float on held-out trials under calibration conditions.
    pub fidelity: Option<Fidelity>,
    /// The same on the first trials of the later (drifted) sessions, whose
    /// activations can exceed the calibrated ranges.
    pub drifted_fidelity: Option<Fidelity>,
    pub complete: bool,
    pub error: Option<String>,
}

/// Everything one run produced.
#[derive(Clone, Debug, Default)]
pub struct SeedRun {
    pub report: SeedReport,
    pub logs: Vec<SessionLog>,
    pub chain: Vec<ChainSession>,
    pub outcomes: Vec<SessionOutcome>,
    pub params: Option<ModelParams>,
    pub quant: Option<crate::quant::QuantBackbone>,
}

fn probe_accuracy(model: &Model, data: &SeedData) -> Result<Option<f64>> {
    data.probe.as_ref().map(|p| model.evaluate(&p.trials)).transpose()
}

/// Fills in what every workflow reports about the starting model.
fn baseline(cfg: &ExperimentConfig, data: &SeedData, model: &Model, run: &mut SeedRun) -> Result<()> {
    let r = &mut run.report;
    r.seed = data.seed;
    r.pretrain_accuracy = Some(model.evaluate(&data.sessions[0].trials)?);
    r.probe_before = probe_accuracy(model, data)?;
    for (k, s) in data.sessions.iter().enumerate().skip(1) {
        let acc = model.evaluate(&s.trials)?;
        r.no_adaptation.push((k + 1, acc));
        if cfg.baseline {
            run.outcomes.push(SessionOutcome {
                strategy: "none".into(),
                seed: data.seed,
                session: k + 1,
                accuracy: Some(acc),
                train_trials: 0,
                train_steps: 0,
            });
        }
    }
    Ok(())
}

fn fail(mut run: SeedRun, seed: u64, e: impl std::fmt::Display) -> SeedRun {
    run.report.seed = seed;
    run.report.complete = false;
    run.report.error = Some(e.to_string());
    run
}

/// Train-on-request over sessions 2.. with `cfg.tor`.
pub fn run_tor(cfg: &ExperimentConfig, data: &SeedData) -> SeedRun {
    let mut run = SeedRun::default();
    let tcfg = tor_config(cfg, data.seed);
    let model = match initial_model(cfg, data) {
        Ok(m) => m,
        Err(e) => return fail(run, data.seed, e),
    };
    if let Err(e) = baseline(cfg, data, &model, &mut run) {
        return fail(run, data.seed, e);
    }
    let mut state = WorkflowState::new(model, &tcfg);
    if tcfg.strategy == Strategy::Er && tcfg.buffer_pretraining {
        state.offer(&data.sessions[0].trials);
    }
    let info = RunInfo {
        run_id: format!("{}-seed{}", tcfg.strategy, data.seed),
        strategy: tcfg.strategy.to_string(),
        seed: data.seed,
    };
    run.report.strategy = info.strategy.clone();
    let result = tor_workflow(&mut state, &data.novel(), 2, &tcfg, &cfg.cost, &info);
    let error = match result {
        Ok(logs) => {
            run.logs = logs;
            None
        }
        Err(a) => {
            run.logs = a.logs;
            Some(a.error)
        }
    };
    run.outcomes.extend(run.logs.iter().filter(|l| l.complete).map(SessionOutcome::from));
    run.report.train_trials = run.logs.iter().map(|l| l.train_trials).sum();
    run.report.train_steps = run.logs.iter().map(|l| l.train_steps).sum();
    if let Model::Float(p) = &state.model {
        run.params = Some(p.clone());
    }
    if let Some(e) = error {
        return fail(run, data.seed, e);
    }
    match probe_accuracy(&state.model, data) {
        Ok(p) => run.report.probe_after = p,
        Err(e) => return fail(run, data.seed, e),
    }
    run.report.complete = true;
    run
}

/// Chain transfer learning at `chain.split` over sessions 2..
pub fn run_chain(cfg: &ExperimentConfig, data: &SeedData) -> SeedRun {
    let mut run = SeedRun::default();
    let tcfg = tor_config(cfg, data.seed);
    let model = match initial_model(cfg, data) {
        Ok(m) => m,
        Err(e) => return fail(run, data.seed, e),
    };
    if let Err(e) = baseline(cfg, data, &model, &mut run) {
        return fail(run, data.seed, e);
    }
    run.report.strategy = "chain-tl".into();
    let mut state = WorkflowState::new(model, &tcfg);
    match chain_tl(&mut state, &data.novel(), 2, cfg.chain_split, &tcfg, &cfg.cost) {
        Ok(chain) => run.chain = chain,
        Err(e) => return fail(run, data.seed, e),
    }
    run.outcomes
        .extend(run.chain.iter().map(|c| SessionOutcome::from_chain("chain-tl", data.seed, c)));
    run.report.train_trials = run.chain.iter().map(|c| c.train_trials).sum();
    run.report.train_steps = run.chain.iter().map(|c| c.steps).sum();
    match probe_accuracy(&state.model, data) {
        Ok(p) => run.report.probe_after = p,
        Err(e) => return fail(run, data.seed, e),
    }
    if let Model::Float(p) = state.model {
        run.params = Some(p);
    }
    run.report.complete = true;
    run
}

fn run_pretrain(cfg: &ExperimentConfig, data: &SeedData) -> SeedRun {
    let mut run = SeedRun {
        params: Some(data.params.clone()),
        ..SeedRun::default()
    };
    run.report.strategy = "none".into();
    if let Err(e) = baseline(cfg, data, &Model::Float(data.params.clone()), &mut run) {
        return fail(run, data.seed, e);
    }
    run.report.complete = true;
    run
}

/// Calibrates on the pretraining session and compares the 8-bit backbone
/// with the float one on the probe set and on the first
/// [`FIDELITY_TRIALS`] trials of the later sessions.
fn run_quantize(cfg: &ExperimentConfig, data: &SeedData) -> SeedRun {
    let mut run = run_pretrain(cfg, data);
    if !run.report.complete {
        return run;
    }
    let drifted: Vec<_> = data.sessions[1..]
        .iter()
        .flat_map(|s| s.trials.iter().cloned())
        .take(FIDELITY_TRIALS)
        .collect();
    let result = calibrate_quantize(&data.params, &data.sessions[0].trials).and_then(|qb| {
        let held_out = data.probe.as_ref().map(|p| fidelity(&data.params, &qb, &p.trials)).transpose()?;
        Ok((held_out, fidelity(&data.params, &qb, &drifted)?, qb))
    });
    match result {
        Ok((f, d, qb)) => {
            run.report.fidelity = f;
            run.report.drifted_fidelity = Some(d);
            run.quant = Some(qb);
            run
        }
        Err(e) => fail(run, data.seed, e),
    }
}

/// Runs `workflow` for one prepared seed.
pub fn run_seed(cfg: &ExperimentConfig, workflow: Workflow, data: &SeedData) -> SeedRun {
    match workflow {
        Workflow::Pretrain => run_pretrain(cfg, data),
        Workflow::ChainTl => run_chain(cfg, data),
        Workflow::Tor => run_tor(cfg, data),
        Workflow::Quantize => run_quantize(cfg, data),
    }
}

/// Runs `f` over `items` on `workers` threads; results keep input order.
pub fn parallel_map<T: Sync, U: Send>(workers: usize, items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Result<Vec<U>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

/// What [`run_experiment`] wrote and computed.
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub out: PathBuf,
    pub seeds: Vec<SeedReport>,
    pub rows: Vec<ReportRow>,
    pub files: Vec<PathBuf>,
}

impl ExperimentOutcome {
    pub fn complete(&self) -> bool {
        self.seeds.iter().all(|s| s.complete)
    }

    /// Summary row of `strategy`, if the report has one.
    pub fn summary(&self, strategy: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.kind == RowKind::Summary && r.strategy == strategy)
    }
}

struct Artifacts {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Artifacts {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Artifacts {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let p = self.root.join(rel.as_ref());
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.push(rel.as_ref().to_path_buf());
        Ok(p)
    }

    fn text(&mut self, rel: impl AsRef<Path>, body: &str) -> Result<()> {
        let p = self.path(rel)?;
        fs::write(p, body)?;
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: impl AsRef<Path>, v: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.text(rel, &s)
    }

    fn create(&mut self, rel: impl AsRef<Path>) -> Result<BufWriter<fs::File>> {
        let p = self.path(rel)?;
        Ok(BufWriter::new(fs::File::create(p)?))
    }

    fn manifest(&mut self, workflow: &str, seeds: &[SeedReport]) -> Result<()> {
        let ok = seeds.iter().all(|s| s.complete);
        let mut m = format!("workflow: {workflow}\nstatus: {}\n", if ok { "complete" } else { "incomplete" });
        for s in seeds {
            match &s.error {
                None => m.push_str(&format!("seed {}: complete\n", s.seed)),
                Some(e) => m.push_str(&format!("seed {}: incomplete: {e}\n", s.seed)),
            }
        }
        m.push_str("files:\n");
        for f in &self.files {
            m.push_str(&format!("  {}\n", f.display()));
        }
        fs::write(self.root.join("MANIFEST"), m)?;
        Ok(())
    }
}

fn write_outcomes(a: &mut Artifacts, rel: impl AsRef<Path>, outcomes: &[SessionOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(a.create(rel)?);
    for o in outcomes {
        w.serialize(o)?;
    }
    w.flush()?;
    Ok(())
}

fn write_chain<W: std::io::Write>(chain: &[ChainSession], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["session", "train_trials", "test_trials", "accuracy", "steps", "est_energy_mJ", "est_latency_s", "est_acq_min"])?;
    for c in chain {
        out.write_record([
            c.session.to_string(),
            c.train_trials.to_string(),
            c.test_trials.to_string(),
            format!("{:.4}", c.accuracy),
            c.steps.to_string(),
            format!("{:.3}", c.cost.energy_mj),
            format!("{:.4}", c.cost.latency_s),
            format!("{:.4}", c.cost.acquisition_min),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes one run's files under `dir` (relative to the artifact root).
fn write_seed(a: &mut Artifacts, dir: &str, run: &SeedRun, logs_name: &str) -> Result<()> {
    if !run.logs.is_empty() {
        write_session_logs(&run.logs, a.create(format!("{dir}/{logs_name}"))?)?;
    }
    if !run.chain.is_empty() {
        write_chain(&run.chain, a.create(format!("{dir}/chain.csv"))?)?;
    }
    write_outcomes(a, format!("{dir}/outcomes.csv"), &run.outcomes)?;
    a.json(format!("{dir}/summary.json"), &run.report)?;
    if let Some(p) = &run.params {
        save_params(p, a.path(format!("{dir}/model.torw"))?)?;
    }
    if let Some(q) = &run.quant {
        save_quant(q, a.path(format!("{dir}/backbone.torq"))?)?;
    }
    Ok(())
}

fn write_report(a: &mut Artifacts, cfg: &ExperimentConfig, outcomes: &[SessionOutcome], prefix: &str) -> Result<Vec<ReportRow>> {
    let rows = aggregate_outcomes(outcomes, &cfg.cost, &cfg.report);
    write_report_csv(&rows, a.create(format!("{prefix}report.csv"))?)?;
    write_report_json(&rows, a.create(format!("{prefix}report.json"))?)?;
    Ok(rows)
}

fn prepare_all(cfg: &ExperimentConfig) -> Result<Vec<(u64, Result<SeedData>)>> {
    let seeds = cfg.seed_list();
    let data = parallel_map(cfg.workers, &seeds, |&s| prepare(cfg, s))?;
    Ok(seeds.into_iter().zip(data).collect())
}

/// Runs `workflow` for every seed and writes the artifacts under `cfg.out`:
/// `config.txt` (resolved configuration), `seed-<n>/` per run, the aggregate
/// `report.csv`/`report.json` and a `MANIFEST` recording completeness.
///
/// Configuration errors are returned before anything is written. Failures
/// inside a run are recorded in its `summary.json` and in the `MANIFEST`;
/// the other runs and the partial outputs are kept.
pub fn run_experiment(cfg: &ExperimentConfig, workflow: Workflow) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let mut a = Artifacts::new(&cfg.out)?;
    a.text("config.txt", &cfg.to_kv())?;
    let prepared = prepare_all(cfg)?;
    let runs = parallel_map(cfg.workers, &prepared, |(seed, d)| match d {
        Ok(d) => run_seed(cfg, workflow, d),
        Err(e) => fail(SeedRun::default(), *seed, format!("preparing run: {e}")),
    })?;
    let logs_name = format!("sessions-{}.csv", if workflow == Workflow::Tor { cfg.tor.strategy.as_str() } else { workflow.as_str() });
    let mut outcomes = Vec::new();
    for run in &runs {
        write_seed(&mut a, &format!("seed-{}", run.report.seed), run, &logs_name)?;
        outcomes.extend(run.outcomes.iter().cloned());
    }
    if workflow == Workflow::Quantize {
        write_fidelity(&mut a, &runs)?;
    }
    let rows = write_report(&mut a, cfg, &outcomes, "")?;
    let seeds: Vec<SeedReport> = runs.into_iter().map(|r| r.report).collect();
    a.manifest(workflow.as_str(), &seeds)?;
    Ok(ExperimentOutcome {
        out: cfg.out.clone(),
        seeds,
        rows,
        files: a.files,
    })
}

fn write_fidelity(a: &mut Artifacts, runs: &[SeedRun]) -> Result<()> {
    let mut w = csv::Writer::from_writer(a.create("fidelity.csv")?);
    w.write_record(["seed", "set", "trials", "min_cosine", "mean_cosine", "agreement", "float_accuracy", "int8_accuracy"])?;
    for r in runs {
        let sets = [("held-out", &r.report.fidelity), ("drifted", &r.report.drifted_fidelity)];
        for (name, f) in sets {
            let Some(f) = f else { continue };
            w.write_record([
                r.report.seed.to_string(),
                name.to_string(),
                f.trials.to_string(),
                format!("{:.6}", f.min_cosine),
                format!("{:.6}", f.mean_cosine),
                format!("{:.4}", f.agreement),
                format!("{:.4}", f.float_accuracy),
                format!("{:.4}", f.int8_accuracy),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// The knob a sweep varies.
#[derive(Clone, Debug, PartialEq)]
pub enum SweepAxis {
    TAcc(Vec<f64>),
    Trls(Vec<usize>),
}

impl SweepAxis {
    pub fn key(&self) -> &'static str {
        match self {
            SweepAxis::TAcc(_) => "t_acc",
            SweepAxis::Trls(_) => "trls",
        }
    }

    fn values(&self) -> Vec<String> {
        match self {
            SweepAxis::TAcc(v) => v.iter().map(f64::to_string).collect(),
            SweepAxis::Trls(v) => v.iter().map(usize::to_string).collect(),
        }
    }
}

/// Train-on-request for every combination of an axis value and a strategy.
/// Each seed is prepared (pretrained) once and shared by all combinations.
/// Writes one report per value under `<key>-<value>/` and `sweep.csv` with
/// the summary rows of all of them.
pub fn run_sweep(cfg: &ExperimentConfig, axis: &SweepAxis, strategies: &[Strategy]) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    if axis.values().is_empty() || strategies.is_empty() {
        return Err(Error::Config("a sweep needs at least one value and one strategy".into()));
    }
    let mut variants = Vec::new();
    for value in axis.values() {
        let mut c = cfg.clone();
        c.set(&format!("tor.{}", axis.key()), &value)?;
        c.baseline = false;
        for &s in strategies {
            let mut c = c.clone();
            c.tor.strategy = s;
            c.validate()?;
            variants.push((value.clone(), c));
        }
    }

    let mut a = Artifacts::new(&cfg.out)?;
    a.text("config.txt", &cfg.to_kv())?;
    let prepared = prepare_all(cfg)?;
    let jobs: Vec<(usize, usize)> = (0..variants.len())
        .flat_map(|v| (0..prepared.len()).map(move |p| (v, p)))
        .collect();
    let runs = parallel_map(cfg.workers, &jobs, |&(v, p)| {
        let (seed, d) = &prepared[p];
        match d {
            Ok(d) => run_tor(&variants[v].1, d),
            Err(e) => fail(SeedRun::default(), *seed, format!("preparing run: {e}")),
        }
    })?;

    let mut sweep_rows = Vec::new();
    let mut all_rows = Vec::new();
    let mut seeds = Vec::new();
    for value in axis.values() {
        let dir = format!("{}-{}", axis.key(), value);
        let mut outcomes = Vec::new();
        for (&(v, _), run) in jobs.iter().zip(&runs) {
            if variants[v].0 != value {
                continue;
            }
            let strategy = variants[v].1.tor.strategy;
            write_seed(
                &mut a,
                &format!("{dir}/seed-{}/{strategy}", run.report.seed),
                run,
                &format!("sessions-{strategy}.csv"),
            )?;
            outcomes.extend(run.outcomes.iter().cloned());
            seeds.push(run.report.clone());
        }
        let rows = write_report(&mut a, cfg, &outcomes, &format!("{dir}/"))?;
        for r in rows.iter().filter(|r| r.kind == RowKind::Summary) {
            sweep_rows.push((value.clone(), r.clone()));
        }
        all_rows.extend(rows);
    }

    let mut w = csv::Writer::from_writer(a.create("sweep.csv")?);
    w.write_record(["axis", "value", "strategy", "runs", "accuracy", "train_trials", "acq_min", "energy_mJ", "itr_bits_min", "mean_itr_bits_min"])?;
    let f = |v: Option<f64>, d: usize| v.map(|x| format!("{x:.d$}")).unwrap_or_default();
    for (value, r) in &sweep_rows {
        w.write_record([
            axis.key().to_string(),
            value.clone(),
            r.strategy.clone(),
            r.runs.to_string(),
            f(r.accuracy, 4),
            format!("{:.2}", r.train_trials),
            format!("{:.3}", r.acquisition_min),
            format!("{:.2}", r.energy_mj),
            f(r.itr_bits_min, 3),
            f(r.mean_itr_bits_min, 3),
        ])?;
    }
    w.flush()?;
    drop(w);
    a.manifest(&format!("sweep {}", axis.key()), &seeds)?;
    Ok(ExperimentOutcome {
        out: cfg.out.clone(),
        seeds,
        rows: all_rows,
        files: a.files,
    })
}

/// Writes the sessions of every run as session files:
/// `seed-<n>/session-<k>.eegs` and `seed-<n>/probe.eegs`.
pub fn generate(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    if !cfg.files.is_empty() {
        return Err(Error::Config("generate writes synthetic data; data.files must be empty".into()));
    }
    let mut a = Artifacts::new(&cfg.out)?;
    a.text("config.txt", &cfg.to_kv())?;
    let seeds = cfg.seed_list();
    let data = parallel_map(cfg.workers, &seeds, |&s| load_sessions(cfg, s))?;
    let mut reports = Vec::new();
    for (&seed, d) in seeds.iter().zip(data) {
        let (sessions, probe) = d?;
        for (k, s) in sessions.iter().enumerate() {
            write_session(s, a.path(format!("seed-{seed}/session-{}.eegs", k + 1))?)?;
        }
        if let Some(p) = probe {
            write_session(&p, a.path(format!("seed-{seed}/probe.eegs"))?)?;
        }
        reports.push(SeedReport {
            seed,
            complete: true,
            ..SeedReport::default()
        });
    }
    a.manifest("generate", &reports)?;
    Ok(ExperimentOutcome {
        out: cfg.out.clone(),
        seeds: reports,
        rows: Vec::new(),
        files: a.files,
    })
}

/// Collects every `outcomes.csv` below `dirs` (sorted walk) and writes a
/// combined report to `out`.
pub fn report(dirs: &[PathBuf], cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let mut found = Vec::new();
    for d in dirs {
        if !d.exists() {
            return Err(Error::Config(format!("no such directory: {}", d.display())));
        }
        collect_outcome_files(d, &mut found)?;
    }
    found.sort();
    found.dedup();
    let mut outcomes = Vec::new();
    for f in &found {
        let mut r = csv::Reader::from_path(f)?;
        for o in r.deserialize::<SessionOutcome>() {
            outcomes.push(o?);
        }
    }
    let mut a = Artifacts::new(&cfg.out)?;
    let rows = write_report(&mut a, cfg, &outcomes, "")?;
    let mut sources = String::new();
    for f in &found {
        sources.push_str(&f.display().to_string());
        sources.push('\n');
    }
    a.text("sources.txt", &sources)?;
    a.manifest("report", &[])?;
    Ok(ExperimentOutcome {
        out: cfg.out.clone(),
        seeds: Vec::new(),
        rows,
        files: a.files,
    })
}

fn collect_outcome_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<Vec<_>>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            collect_outcome_files(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "outcomes.csv") {
            out.push(p);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.apply_kv(
            "gen.n_sessions=3\ngen.runs_per_session=2\ngen.trials_per_session=20\ngen.probe_trials=10\n\
             pretrain.epochs=1\ntor.eps=1\ntor.trls=5\n",
        )
        .unwrap();
        c
    }

    #[test]
    fn tor_run_writes_everything() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny();
        c.out = dir.path().to_path_buf();
        c.tor.strategy = Strategy::Er;
        let o = run_experiment(&c, Workflow::Tor).unwrap();
        assert!(o.complete());
        for f in ["config.txt", "report.csv", "report.json", "MANIFEST", "seed-0/sessions-er.csv", "seed-0/outcomes.csv", "seed-0/summary.json", "seed-0/model.torw"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let back = ExperimentConfig::from_kv(&fs::read_to_string(dir.path().join("config.txt")).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(o.summary("er").is_some() && o.summary("none").is_some());
    }

    #[test]
    fn bad_config_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny();
        c.out = dir.path().join("x");
        c.tor.trls = 0;
        assert!(matches!(run_experiment(&c, Workflow::Tor), Err(Error::Config(_))));
        assert!(!c.out.exists());
    }

    #[test]
    fn failed_run_is_marked_incomplete() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny();
        c.out = dir.path().to_path_buf();
        // A diverging learning rate aborts the first finetuning block.
        c.tor.lr_ft = 1e30;
        let o = run_experiment(&c, Workflow::Tor).unwrap();
        assert!(!o.complete());
        let m = fs::read_to_string(dir.path().join("MANIFEST")).unwrap();
        assert!(m.contains("status: incomplete"), "{m}");
        assert!(dir.path().join("seed-0/summary.json").exists());
    }
}
