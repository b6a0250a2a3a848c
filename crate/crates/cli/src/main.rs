//! `tor`: runs train-on-request experiments from the command line.
//!
//! Settings resolve in this order, later ones winning: built-in defaults,
//! `--config` file, the `TOR_OUT` environment variable (output root only),
//! `--set key=value`, then dedicated flags. Exit status is 0 on success,
//! 2 for configuration errors and 3 when a run fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tor_core::experiment::{self, ExperimentConfig, ExperimentOutcome, SweepAxis, Workflow};
use tor_core::learn::Strategy;
use tor_core::metrics::RowKind;
use tor_core::Error;

#[derive(Parser)]
#[command(name = "tor", version, about = "Train-on-request continual learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic sessions as session files.
    Generate(Common),
    /// Pretrain on the first session and save the model.
    Pretrain(RunArgs),
    /// Chain transfer learning: finetune on a fixed fraction of every session.
    ChainTl(RunArgs),
    /// Train on request: finetune only when a subsession misses the threshold.
    Tor(RunArgs),
    /// Train on request over a grid of thresholds or subsession sizes.
    Sweep(SweepArgs),
    /// Aggregate the outcomes found below one or more output directories.
    Report(ReportArgs),
    /// Calibrate the 8-bit backbone and check it against the float model.
    Quantize(RunArgs),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set gen.erd_depth=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output root; the command writes to `<root>/<command>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of runs.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    first_seed: Option<String>,
    /// Runs executed in parallel.
    #[arg(long)]
    workers: Option<String>,
    /// Comma-separated session files, first one used for pretraining.
    #[arg(long)]
    data: Option<String>,
    /// Float checkpoint to start from instead of pretraining.
    #[arg(long)]
    checkpoint: Option<String>,
}

/// Flags named after the workflow and training settings.
#[derive(Args, Clone, Default)]
struct Knobs {
    #[arg(long)]
    t_acc: Option<String>,
    #[arg(long)]
    trls: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    lr_ft: Option<String>,
    /// tl, er or lwf.
    #[arg(long)]
    strategy: Option<String>,
    /// full or head.
    #[arg(long)]
    scope: Option<String>,
    /// adam or sgd.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    frozen_bn: Option<String>,
    #[arg(long)]
    lwf_lambda: Option<String>,
    #[arg(long)]
    lwf_temperature: Option<String>,
    #[arg(long)]
    buffer_size: Option<String>,
    /// float or odl.
    #[arg(long)]
    backend: Option<String>,
    /// Chain-TL training fraction.
    #[arg(long)]
    split: Option<String>,
    /// Pretraining epochs.
    #[arg(long)]
    epochs: Option<String>,
    /// Pretraining learning rate.
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    knobs: Knobs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated thresholds, e.g. 0.7,0.8,0.9,1.0.
    #[arg(long, conflicts_with = "trls", required_unless_present = "trls")]
    t_acc: Option<String>,
    /// Comma-separated subsession sizes, e.g. 5,10,20.
    #[arg(long)]
    trls: Option<String>,
    /// Strategies compared at every value.
    #[arg(long, default_value = "tl,er,lwf")]
    strategies: String,
}

#[derive(Args)]
struct ReportArgs {
    /// Directories searched recursively for outcomes.csv.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn set(cfg: &mut ExperimentConfig, key: &str, value: &Option<String>) -> Result<(), Error> {
    match value {
        Some(v) => cfg.set(key, v),
        None => Ok(()),
    }
}

fn apply_sets(cfg: &mut ExperimentConfig, sets: &[String]) -> Result<(), Error> {
    for s in sets {
        let Some((k, v)) = s.split_once('=') else {
            return Err(Error::Config(format!("--set expects KEY=VALUE, got '{s}'")));
        };
        cfg.set(k.trim(), v)?;
    }
    Ok(())
}

fn load_file(cfg: &mut ExperimentConfig, path: &Option<PathBuf>) -> Result<(), Error> {
    if let Some(p) = path {
        let text = std::fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
        cfg.apply_kv(&text)
            .map_err(|e| Error::Config(format!("{}: {}", p.display(), strip_prefix(&e))))?;
    }
    Ok(())
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

/// Settings shared by every command. The command writes to
/// `<root>/<command>`, where the root is the first of `--out`,
/// `--set run.out=...`, `TOR_OUT`, the file's `run.out` and `out`.
fn resolve_common(c: &Common, command: &str) -> Result<ExperimentConfig, Error> {
    let default_out = ExperimentConfig::default().out;
    let mut cfg = ExperimentConfig::default();
    load_file(&mut cfg, &c.config)?;
    let file_root = (cfg.out != default_out).then(|| cfg.out.clone());
    apply_sets(&mut cfg, &c.set)?;
    let set_root = c
        .set
        .iter()
        .any(|s| s.split_once('=').is_some_and(|(k, _)| k.trim() == "run.out"))
        .then(|| cfg.out.clone());
    set(&mut cfg, "run.seeds", &c.seeds)?;
    set(&mut cfg, "run.first_seed", &c.first_seed)?;
    set(&mut cfg, "run.workers", &c.workers)?;
    set(&mut cfg, "data.files", &c.data)?;
    set(&mut cfg, "pretrain.checkpoint", &c.checkpoint)?;
    let root = c
        .out
        .clone()
        .or(set_root)
        .or_else(|| std::env::var_os("TOR_OUT").map(PathBuf::from))
        .or(file_root)
        .unwrap_or(default_out);
    cfg.out = root.join(command);
    Ok(cfg)
}

fn apply_knobs(cfg: &mut ExperimentConfig, k: &Knobs) -> Result<(), Error> {
    set(cfg, "tor.t_acc", &k.t_acc)?;
    set(cfg, "tor.trls", &k.trls)?;
    set(cfg, "tor.eps", &k.eps)?;
    set(cfg, "tor.lr_ft", &k.lr_ft)?;
    set(cfg, "tor.strategy", &k.strategy)?;
    set(cfg, "tor.scope", &k.scope)?;
    set(cfg, "tor.optimizer", &k.optimizer)?;
    set(cfg, "tor.frozen_bn", &k.frozen_bn)?;
    set(cfg, "tor.lwf_lambda", &k.lwf_lambda)?;
    set(cfg, "tor.lwf_temperature", &k.lwf_temperature)?;
    set(cfg, "tor.buffer_size", &k.buffer_size)?;
    set(cfg, "tor.backend", &k.backend)?;
    set(cfg, "chain.split", &k.split)?;
    set(cfg, "pretrain.epochs", &k.epochs)?;
    set(cfg, "pretrain.lr", &k.lr)?;
    set(cfg, "pretrain.batch_size", &k.batch_size)?;
    Ok(())
}

fn list<T: std::str::FromStr>(flag: &str, s: &str) -> Result<Vec<T>, Error>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|e| Error::Config(format!("--{flag}: cannot parse '{v}': {e}"))))
        .collect()
}

fn print_summary(o: &ExperimentOutcome) {
    println!("wrote {}", o.out.display());
    for r in o.rows.iter().filter(|r| r.kind == RowKind::Summary) {
        let acc = r.accuracy.map(|a| format!("{a:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "  {:<9} runs {}  accuracy {}  train trials/run {:.1}  acquisition {:.2} min",
            r.strategy, r.runs, acc, r.train_trials, r.acquisition_min
        );
    }
    for s in o.seeds.iter().filter(|s| !s.complete) {
        eprintln!("  seed {} incomplete: {}", s.seed, s.error.as_deref().unwrap_or("unknown error"));
    }
}

fn run(cli: Cli) -> Result<ExperimentOutcome, Error> {
    match cli.command {
        Command::Generate(c) => experiment::generate(&resolve_common(&c, "generate")?),
        Command::Pretrain(a) => workflow(a, "pretrain", Workflow::Pretrain),
        Command::ChainTl(a) => workflow(a, "chain-tl", Workflow::ChainTl),
        Command::Tor(a) => workflow(a, "tor", Workflow::Tor),
        Command::Quantize(a) => workflow(a, "quantize", Workflow::Quantize),
        Command::Sweep(a) => {
            let cfg = resolve_common(&a.common, "sweep")?;
            let axis = match (&a.t_acc, &a.trls) {
                (Some(v), _) => SweepAxis::TAcc(list("t-acc", v)?),
                (None, Some(v)) => SweepAxis::Trls(list("trls", v)?),
                (None, None) => return Err(Error::Config("sweep needs --t-acc or --trls".into())),
            };
            let strategies: Vec<Strategy> = list("strategies", &a.strategies)?;
            experiment::run_sweep(&cfg, &axis, &strategies)
        }
        Command::Report(a) => {
            let c = Common {
                config: a.config,
                set: a.set,
                out: a.out,
                ..Common::default()
            };
            let cfg = resolve_common(&c, "report")?;
            experiment::report(&a.dirs, &cfg)
        }
    }
}

fn workflow(a: RunArgs, name: &str, w: Workflow) -> Result<ExperimentOutcome, Error> {
    let mut cfg = resolve_common(&a.common, name)?;
    apply_knobs(&mut cfg, &a.knobs)?;
    experiment::run_experiment(&cfg, w)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(o) => {
            print_summary(&o);
            if o.complete() {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: some runs failed; see {}", o.out.join("MANIFEST").display());
                ExitCode::from(3)
            }
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
