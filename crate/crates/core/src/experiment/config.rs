use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::data::GeneratorSpec;
use crate::dsp::{MovingAverageMode, PreprocessConfig};
use crate::error::{Error, Result};
use crate::learn::TorConfig;
use crate::metrics::ReportConfig;
use crate::net::{OptimizerKind, Scope, TrainConfig};
use crate::quant::CostModel;

/// What the adapted model runs on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Float network, trained in `tor.scope`.
    #[default]
    Float,
    /// Frozen 8-bit backbone with a float head (head-only SGD).
    Odl,
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "float" => Ok(Backend::Float),
            "odl" | "int8" => Ok(Backend::Odl),
            _ => Err(Error::Config(format!("unknown backend '{s}' (expected float or odl)"))),
        }
    }
}

/// A fully resolved experiment. Every field has a `section.name` key; see
/// [`ExperimentConfig::entries`].
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub generator: GeneratorSpec,
    /// Multiplies every drift component of the generator.
    pub drift_scale: f64,
    pub preprocess: PreprocessConfig,
    /// Session files (`.eegs` or `.csv`) in chronological order. Empty means
    /// generate synthetic data.
    pub files: Vec<PathBuf>,
    /// Sampling rate assumed for CSV recordings.
    pub csv_fs: u32,
    /// Give every run its own synthetic dataset (`gen.seed + run seed`).
    /// When false all runs share one dataset and only training is reseeded.
    pub reseed_data: bool,
    pub pretrain: TrainConfig,
    /// Start from this float checkpoint instead of pretraining.
    pub checkpoint: Option<PathBuf>,
    pub tor: TorConfig,
    pub backend: Backend,
    pub chain_split: f64,
    pub cost: CostModel,
    pub report: ReportConfig,
    pub first_seed: u64,
    pub seeds: usize,
    pub workers: usize,
    /// Also report the never-finetuned model as strategy `none`.
    pub baseline: bool,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            generator: GeneratorSpec::default(),
            drift_scale: 1.0,
            preprocess: PreprocessConfig::default(),
            files: Vec::new(),
            csv_fs: 500,
            reseed_data: true,
            pretrain: TrainConfig::pretrain(0),
            checkpoint: None,
            tor: TorConfig::default(),
            backend: Backend::Float,
            chain_split: 0.6,
            cost: CostModel::default(),
            report: ReportConfig::default(),
            first_seed: 0,
            seeds: 1,
            workers: 1,
            baseline: true,
            out: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse '{value}': {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{value}'"))),
    }
}

fn scope_name(s: Scope) -> &'static str {
    match s {
        Scope::FullModel => "full",
        Scope::HeadOnly => "head",
    }
}

fn optimizer_name(o: OptimizerKind) -> &'static str {
    match o {
        OptimizerKind::Adam { .. } => "adam",
        OptimizerKind::Sgd => "sgd",
    }
}

fn ma_name(m: MovingAverageMode) -> &'static str {
    match m {
        MovingAverageMode::Subtract => "subtract",
        MovingAverageMode::Smooth => "smooth",
        MovingAverageMode::Off => "off",
    }
}

/// Every recognised key, in echo order.
pub const KEYS: &[&str] = &[
    "data.files",
    "data.csv_fs",
    "data.reseed",
    "gen.n_sessions",
    "gen.trials_per_session",
    "gen.runs_per_session",
    "gen.fs",
    "gen.mu_freq_hz",
    "gen.mu_bandwidth_hz",
    "gen.mu_amplitude",
    "gen.erd_depth",
    "gen.noise_level",
    "gen.line_noise",
    "gen.drift.gain_sigma",
    "gen.drift.mix_epsilon",
    "gen.drift.noise_sigma",
    "gen.drift_scale",
    "gen.probe_trials",
    "gen.cue_s",
    "gen.rest_min_s",
    "gen.rest_max_s",
    "gen.seed",
    "dsp.bandpass_low_hz",
    "dsp.bandpass_high_hz",
    "dsp.bandpass_order",
    "dsp.notch_hz",
    "dsp.notch_q",
    "dsp.moving_average_s",
    "dsp.moving_average",
    "pretrain.epochs",
    "pretrain.lr",
    "pretrain.batch_size",
    "pretrain.optimizer",
    "pretrain.shuffle",
    "pretrain.checkpoint",
    "tor.t_acc",
    "tor.trls",
    "tor.eps",
    "tor.lr_ft",
    "tor.strategy",
    "tor.scope",
    "tor.optimizer",
    "tor.frozen_bn",
    "tor.lwf_lambda",
    "tor.lwf_temperature",
    "tor.buffer_size",
    "tor.buffer_pretraining",
    "tor.backend",
    "chain.split",
    "cost.t_step_ms",
    "cost.e_step_mj",
    "cost.p_avg_mw",
    "cost.t_trial_s",
    "report.t_dec_s",
    "report.last_sessions",
    "run.first_seed",
    "run.seeds",
    "run.workers",
    "run.baseline",
    "run.out",
];

impl ExperimentConfig {
    /// Sets one key. Errors are configuration errors naming the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let g = &mut self.generator;
        let t = &mut self.tor;
        match key {
            "data.files" => {
                self.files = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(PathBuf::from).collect()
            }
            "data.csv_fs" => self.csv_fs = parse(key, v)?,
            "data.reseed" => self.reseed_data = parse_bool(key, v)?,
            "gen.n_sessions" => g.n_sessions = parse(key, v)?,
            "gen.trials_per_session" => g.trials_per_session = parse(key, v)?,
            "gen.runs_per_session" => g.runs_per_session = parse(key, v)?,
            "gen.fs" => g.fs = parse(key, v)?,
            "gen.mu_freq_hz" => g.mu_freq_hz = parse(key, v)?,
            "gen.mu_bandwidth_hz" => g.mu_bandwidth_hz = parse(key, v)?,
            "gen.mu_amplitude" => g.mu_amplitude = parse(key, v)?,
            "gen.erd_depth" => g.erd_depth = parse(key, v)?,
            "gen.noise_level" => g.noise_level = parse(key, v)?,
            "gen.line_noise" => g.line_noise = parse(key, v)?,
            "gen.drift.gain_sigma" => g.drift.gain_sigma = parse(key, v)?,
            "gen.drift.mix_epsilon" => g.drift.mix_epsilon = parse(key, v)?,
            "gen.drift.noise_sigma" => g.drift.noise_sigma = parse(key, v)?,
            "gen.drift_scale" => self.drift_scale = parse(key, v)?,
            "gen.probe_trials" => g.probe_trials = parse(key, v)?,
            "gen.cue_s" => g.cue_s = parse(key, v)?,
            "gen.rest_min_s" => g.rest_s.0 = parse(key, v)?,
            "gen.rest_max_s" => g.rest_s.1 = parse(key, v)?,
            "gen.seed" => g.seed = parse(key, v)?,
            "dsp.bandpass_low_hz" => self.preprocess.bandpass_low_hz = parse(key, v)?,
            "dsp.bandpass_high_hz" => self.preprocess.bandpass_high_hz = parse(key, v)?,
            "dsp.bandpass_order" => self.preprocess.bandpass_order = parse(key, v)?,
            "dsp.notch_hz" => self.preprocess.notch_hz = parse(key, v)?,
            "dsp.notch_q" => self.preprocess.notch_q = parse(key, v)?,
            "dsp.moving_average_s" => self.preprocess.moving_average_s = parse(key, v)?,
            "dsp.moving_average" => self.preprocess.moving_average = parse(key, v)?,
            "pretrain.epochs" => self.pretrain.epochs = parse(key, v)?,
            "pretrain.lr" => self.pretrain.lr = parse(key, v)?,
            "pretrain.batch_size" => self.pretrain.batch_size = parse(key, v)?,
            "pretrain.optimizer" => self.pretrain.optimizer = parse(key, v)?,
            "pretrain.shuffle" => self.pretrain.shuffle = parse_bool(key, v)?,
            "pretrain.checkpoint" => self.checkpoint = (!v.is_empty()).then(|| PathBuf::from(v)),
            "tor.t_acc" => t.t_acc = parse(key, v)?,
            "tor.trls" => t.trls = parse(key, v)?,
            "tor.eps" => t.eps = parse(key, v)?,
            "tor.lr_ft" => t.lr_ft = parse(key, v)?,
            "tor.strategy" => t.strategy = parse(key, v)?,
            "tor.scope" => t.scope = parse(key, v)?,
            "tor.optimizer" => t.optimizer = parse(key, v)?,
            "tor.frozen_bn" => t.frozen_bn = parse_bool(key, v)?,
            "tor.lwf_lambda" => t.lwf.lambda = parse(key, v)?,
            "tor.lwf_temperature" => t.lwf.temperature = parse(key, v)?,
            "tor.buffer_size" => t.buffer_size = parse(key, v)?,
            "tor.buffer_pretraining" => t.buffer_pretraining = parse_bool(key, v)?,
            "tor.backend" => self.backend = parse(key, v)?,
            "chain.split" => self.chain_split = parse(key, v)?,
            "cost.t_step_ms" => self.cost.t_step_ms = parse(key, v)?,
            "cost.e_step_mj" => self.cost.e_step_mj = parse(key, v)?,
            "cost.p_avg_mw" => self.cost.p_avg_mw = parse(key, v)?,
            "cost.t_trial_s" => self.cost.t_trial_s = parse(key, v)?,
            "report.t_dec_s" => self.report.t_dec_s = parse(key, v)?,
            "report.last_sessions" => self.report.last_sessions = parse(key, v)?,
            "run.first_seed" => self.first_seed = parse(key, v)?,
            "run.seeds" => self.seeds = parse(key, v)?,
            "run.workers" => self.workers = parse(key, v)?,
            "run.baseline" => self.baseline = parse_bool(key, v)?,
            "run.out" => self.out = PathBuf::from(v),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Current value of every key, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let g = &self.generator;
        let t = &self.tor;
        let p = &self.preprocess;
        let files = self.files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>().join(",");
        let values: Vec<String> = vec![
            files,
            self.csv_fs.to_string(),
            self.reseed_data.to_string(),
            g.n_sessions.to_string(),
            g.trials_per_session.to_string(),
            g.runs_per_session.to_string(),
            g.fs.to_string(),
            g.mu_freq_hz.to_string(),
            g.mu_bandwidth_hz.to_string(),
            g.mu_amplitude.to_string(),
            g.erd_depth.to_string(),
            g.noise_level.to_string(),
            g.line_noise.to_string(),
            g.drift.gain_sigma.to_string(),
            g.drift.mix_epsilon.to_string(),
            g.drift.noise_sigma.to_string(),
            self.drift_scale.to_string(),
            g.probe_trials.to_string(),
            g.cue_s.to_string(),
            g.rest_s.0.to_string(),
            g.rest_s.1.to_string(),
            g.seed.to_string(),
            p.bandpass_low_hz.to_string(),
            p.bandpass_high_hz.to_string(),
            p.bandpass_order.to_string(),
            p.notch_hz.to_string(),
            p.notch_q.to_string(),
            p.moving_average_s.to_string(),
            ma_name(p.moving_average).into(),
            self.pretrain.epochs.to_string(),
            self.pretrain.lr.to_string(),
            self.pretrain.batch_size.to_string(),
            optimizer_name(self.pretrain.optimizer).into(),
            self.pretrain.shuffle.to_string(),
            self.checkpoint.as_ref().map(|c| c.display().to_string()).unwrap_or_default(),
            t.t_acc.to_string(),
            t.trls.to_string(),
            t.eps.to_string(),
            t.lr_ft.to_string(),
            t.strategy.to_string(),
            scope_name(t.scope).into(),
            optimizer_name(t.optimizer).into(),
            t.frozen_bn.to_string(),
            t.lwf.lambda.to_string(),
            t.lwf.temperature.to_string(),
            t.buffer_size.to_string(),
            t.buffer_pretraining.to_string(),
            match self.backend {
                Backend::Float => "float".into(),
                Backend::Odl => "odl".into(),
            },
            self.chain_split.to_string(),
            self.cost.t_step_ms.to_string(),
            self.cost.e_step_mj.to_string(),
            self.cost.p_avg_mw.to_string(),
            self.cost.t_trial_s.to_string(),
            self.report.t_dec_s.to_string(),
            self.report.last_sessions.to_string(),
            self.first_seed.to_string(),
            self.seeds.to_string(),
            self.workers.to_string(),
            self.baseline.to_string(),
            self.out.display().to_string(),
        ];
        debug_assert_eq!(values.len(), KEYS.len());
        KEYS.iter().copied().zip(values).collect()
    }

    /// `key=value` lines for every key; reading them back reproduces `self`.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    /// Applies a `key=value` file on top of `self`. Blank lines and lines
    /// starting with `#` are skipped. Errors carry the 1-based line number.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| Error::Config(format!("line {}: {m}", i + 1));
            let Some((k, v)) = line.split_once('=') else {
                return Err(err(format!("expected key=value, got '{line}'")));
            };
            self.set(k.trim(), v).map_err(|e| match e {
                Error::Config(m) => err(m),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        c.apply_kv(text)?;
        Ok(c)
    }

    /// Run seeds in order.
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|k| self.first_seed + k).collect()
    }

    /// Generator spec for run `seed`, with drift scaling applied.
    pub fn generator_for(&self, seed: u64) -> GeneratorSpec {
        let mut g = self.generator.clone();
        g.drift = g.drift.scaled(self.drift_scale);
        if self.reseed_data {
            g.seed = g.seed.wrapping_add(seed);
        }
        g
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::Config("run.seeds must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("run.workers must be at least 1".into()));
        }
        if !(self.drift_scale >= 0.0) || !self.drift_scale.is_finite() {
            return Err(Error::Config(format!("gen.drift_scale must be non-negative, got {}", self.drift_scale)));
        }
        if !(self.chain_split > 0.0 && self.chain_split < 1.0) {
            return Err(Error::Config(format!("chain.split must be in (0, 1), got {}", self.chain_split)));
        }
        if !(self.report.t_dec_s > 0.0) || self.report.last_sessions == 0 {
            return Err(Error::Config("report.t_dec_s must be positive and report.last_sessions at least 1".into()));
        }
        self.tor.validate()?;
        if self.files.is_empty() {
            self.generator.validate()?;
            self.tor.subsessions(self.generator.trials_per_session)?;
        } else if self.files.len() < 2 {
            return Err(Error::Config("data.files needs a pretraining session and at least one more".into()));
        }
        for f in self.files.iter().chain(&self.checkpoint) {
            if !f.exists() {
                return Err(Error::Config(format!("file not found: {}", f.display())));
            }
        }
        self.pretrain.validate()?;
        self.cost.validate()?;
        Ok(())
    }
}
