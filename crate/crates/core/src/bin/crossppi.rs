use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crossppi::harness::probe::{format_probe, lambda_probe};
use crossppi::harness::validate::run_invariant_suite;
use crossppi::harness::{
    parse_set, read_overrides, run_experiment, write_outputs, ExperimentConfig, ExperimentKind,
    FAILURES_METRIC,
};
use crossppi::Error;

/// Trials used by `lambda-probe` unless `--trials` is given.
const PROBE_TRIALS: usize = 10;

#[derive(Parser)]
#[command(
    name = "crossppi",
    version,
    about = "Cross-fitted prediction-powered inference experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config with flat dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the CSV and plot data.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Override one config key, e.g. `--set synth.r2=0.25`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Mean estimation on the linear-Gaussian model.
    SynthMean(Common),
    /// Linear regression on the linear-Gaussian model.
    SynthLinreg(Common),
    /// Beam alignment with a softmax location model and CKM labelers.
    BeamAlign(Common),
    /// Beam alignment with network students on fixed CKM pseudo-labels.
    BeamAlignNn(Common),
    /// Meta-trained teachers (MPL, MCPPI) against fixed teachers.
    McppiBeam(Common),
    /// RSSI fingerprint localization with an ELM ridge model.
    Localize(Common),
    /// Run the invariant suite.
    Validate,
    /// Print λ̂ diagnostics for an experiment config.
    LambdaProbe {
        /// Experiment name, e.g. synth-mean.
        experiment: String,
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(kind: ExperimentKind, c: &Common) -> Result<ExperimentConfig, Failure> {
    let mut overrides: BTreeMap<String, Value> = match &c.config {
        Some(p) => read_overrides(p)?,
        None => BTreeMap::new(),
    };
    if let Some(s) = c.seed {
        overrides.insert("seed".into(), s.into());
    }
    if let Some(t) = c.trials {
        overrides.insert("trials".into(), t.into());
    }
    if let Some(o) = &c.out {
        overrides.insert("out".into(), o.display().to_string().into());
    }
    for s in &c.sets {
        let (k, v) = parse_set(s)?;
        overrides.insert(k, v);
    }
    Ok(ExperimentConfig::from_overrides(kind, &overrides)?)
}

fn run(kind: ExperimentKind, c: &Common) -> Result<(), Failure> {
    let cfg = load(kind, c)?;
    let table = run_experiment(&cfg)?;
    let out = PathBuf::from(cfg.out.clone().unwrap_or_else(|| "results".into()));
    let path = write_outputs(&table, &cfg, &out)?;
    print!("{}", table.to_csv_string());
    eprintln!("wrote {}", path.display());
    let failed: Vec<_> = table
        .rows
        .iter()
        .filter(|r| r.metric == FAILURES_METRIC)
        .collect();
    for r in &failed {
        eprintln!(
            "warning: {} of {} trials of {} failed at sweep {}",
            r.mean, r.trials, r.scheme, r.sweep
        );
    }
    if !table.rows.is_empty() && failed.len() == table.rows.len() {
        return Err(Failure::Runtime("every trial failed".into()));
    }
    Ok(())
}

fn validate() -> Result<(), Failure> {
    let checks = run_invariant_suite();
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Runtime(format!(
            "{failed} invariant checks failed"
        )));
    }
    Ok(())
}

fn probe(experiment: &str, c: &Common) -> Result<(), Failure> {
    let kind: ExperimentKind = experiment.parse()?;
    let mut c = c.clone();
    c.trials = c.trials.or(Some(PROBE_TRIALS));
    let cfg = load(kind, &c)?;
    print!("{}", format_probe(&lambda_probe(&cfg)?));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::SynthMean(c) => run(ExperimentKind::SynthMean, c),
        Command::SynthLinreg(c) => run(ExperimentKind::SynthLinreg, c),
        Command::BeamAlign(c) => run(ExperimentKind::BeamAlign, c),
        Command::BeamAlignNn(c) => run(ExperimentKind::BeamAlignNn, c),
        Command::McppiBeam(c) => run(ExperimentKind::McppiBeam, c),
        Command::Localize(c) => run(ExperimentKind::Localize, c),
        Command::Validate => validate(),
        Command::LambdaProbe { experiment, common } => probe(experiment, common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
