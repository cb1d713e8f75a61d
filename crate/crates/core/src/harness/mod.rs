//! Experiment drivers: configuration, trial fan-out with derived seeds,
//! per-scheme metrics, aggregation and CSV / plot-data output.

mod beam;
pub mod config;
mod localize;
pub mod mest;
pub mod output;
pub mod probe;
mod synth;
pub mod validate;

use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;

pub use beam::{beam_trial, softmax_setup, BeamTrial, SoftmaxSetup};
pub use config::{
    flatten, parse_set, read_overrides, unflatten, ExperimentConfig, ExperimentKind, SchemeName,
    SweepConfig, SweepVar,
};
pub use localize::{localize_trial, LocalizeTrial};
pub use output::{
    emit_csv, emit_plotdata, fmt_g, mean_stderr, parse_csv, ResultsRow, ResultsTable, CSV_HEADER,
};
pub use synth::{synth_trial, SynthTrial};

use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Metric name and value for one scheme in one trial.
pub type Metrics = Vec<(&'static str, f64)>;

#[derive(Debug)]
pub struct SchemeResult {
    pub scheme: SchemeName,
    pub outcome: Result<Metrics>,
}

/// Metric name of the per-row failure counter.
pub const FAILURES_METRIC: &str = "failures";

/// Seed of trial `t` at sweep value `sweep`; independent of the trial count.
pub fn trial_seed(master: u64, experiment: ExperimentKind, sweep: f64, t: usize) -> u64 {
    derive_seed(master, &[experiment.name().into(), sweep.into(), t.into()])
}

/// Held-out points so that they make up `fraction` of all points drawn.
pub fn test_count(train: usize, fraction: f64) -> usize {
    ((fraction / (1.0 - fraction)) * train as f64)
        .round()
        .max(1.0) as usize
}

fn trial_results(cfg: &ExperimentConfig, seed: u64) -> Vec<SchemeResult> {
    let run = || match cfg.experiment {
        ExperimentKind::SynthMean | ExperimentKind::SynthLinreg => synth::run(cfg, seed),
        ExperimentKind::Localize => localize::run(cfg, seed),
        ExperimentKind::BeamAlign => beam::run_softmax(cfg, seed),
        ExperimentKind::BeamAlignNn => beam::run_nn(cfg, seed),
        ExperimentKind::McppiBeam => beam::run_meta(cfg, seed),
    };
    let err = match catch_unwind(AssertUnwindSafe(run)) {
        Ok(Ok(r)) => return r,
        Ok(Err(e)) => e.to_string(),
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            format!("trial panicked: {msg}")
        }
    };
    cfg.schemes
        .iter()
        .map(|&scheme| SchemeResult {
            scheme,
            outcome: Err(Error::InvalidState(err.clone())),
        })
        .collect()
}

/// Rows for one scheme at one sweep value; failed trials are left out of
/// the metric rows and counted in a trailing `failures` row.
fn aggregate(
    cfg: &ExperimentConfig,
    scheme: SchemeName,
    sweep: f64,
    trials: &[Vec<SchemeResult>],
) -> Vec<ResultsRow> {
    let exp = cfg.experiment.name();
    let mut names: Vec<&'static str> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut failures = 0usize;
    for t in trials {
        match t.iter().find(|r| r.scheme == scheme).map(|r| &r.outcome) {
            Some(Ok(metrics)) => {
                for &(name, v) in metrics {
                    let i = names.iter().position(|n| *n == name).unwrap_or_else(|| {
                        names.push(name);
                        values.push(Vec::new());
                        names.len() - 1
                    });
                    values[i].push(v);
                }
            }
            _ => failures += 1,
        }
    }
    let mut rows: Vec<ResultsRow> = names
        .into_iter()
        .zip(values)
        .map(|(name, v)| ResultsRow::from_values(exp, scheme.name(), sweep, name, v))
        .collect();
    if failures > 0 {
        rows.push(ResultsRow {
            experiment: exp.to_string(),
            scheme: scheme.name().to_string(),
            sweep,
            metric: FAILURES_METRIC.to_string(),
            mean: failures as f64,
            stderr: 0.0,
            trials: trials.len(),
            values: Vec::new(),
        });
    }
    rows
}

/// All trials of every sweep value, aggregated per (scheme, sweep, metric).
/// Rows are ordered by scheme (configuration order), then sweep ascending.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultsTable> {
    cfg.validate()?;
    let mut grid = cfg.sweep.grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut per_sweep = Vec::with_capacity(grid.len());
    for &v in &grid {
        let c = cfg.at_sweep(v);
        c.validate()?;
        let trials: Vec<Vec<SchemeResult>> = (0..c.trials)
            .into_par_iter()
            .map(|t| trial_results(&c, trial_seed(cfg.seed, cfg.experiment, v, t)))
            .collect();
        per_sweep.push((v, trials));
    }
    let mut rows = Vec::new();
    for &scheme in &cfg.schemes {
        for (v, trials) in &per_sweep {
            rows.extend(aggregate(cfg, scheme, *v, trials));
        }
    }
    Ok(ResultsTable { rows })
}

/// Write `<out>/<experiment>.csv` and the plot-data files under
/// `<out>/plotdata`.
pub fn write_outputs(
    table: &ResultsTable,
    cfg: &ExperimentConfig,
    out: &std::path::Path,
) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(out)?;
    let path = out.join(format!("{}.csv", cfg.experiment.name()));
    emit_csv(table, &path)?;
    emit_plotdata(table, out.join("plotdata"))?;
    Ok(path)
}
