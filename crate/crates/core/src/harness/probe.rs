//! λ̂ diagnostics: per-trial estimates of the tuned CPPI weight and the
//! trace terms behind them.

use std::fmt::Write as _;

use super::config::{ExperimentConfig, ExperimentKind, SchemeName};
use super::{localize_trial, softmax_setup, synth_trial, trial_seed};
use crate::error::{invalid, Error, Result};
use crate::tuning::TuningEstimate;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub sweep: f64,
    pub trial: usize,
    pub lambda_hat: f64,
    pub raw: f64,
    pub clipped: bool,
    pub degenerate: bool,
    pub trace_h: f64,
    pub trace_v: f64,
    pub trace_c: f64,
    pub r: f64,
}

fn row(sweep: f64, trial: usize, e: &TuningEstimate) -> ProbeRow {
    ProbeRow {
        sweep,
        trial,
        lambda_hat: e.lambda_hat,
        raw: e.raw,
        clipped: e.clipped,
        degenerate: e.degenerate,
        trace_h: e.hessian_hat.trace(),
        trace_v: e.var_fbar_hat.trace(),
        trace_c: e.crosscov_hat.trace(),
        r: e.r,
    }
}

fn estimate(cfg: &ExperimentConfig, seed: u64) -> Result<TuningEstimate> {
    let fit = match cfg.experiment {
        ExperimentKind::SynthMean | ExperimentKind::SynthLinreg => {
            let t = synth_trial(cfg, seed)?;
            t.context(cfg, seed).fit(SchemeName::TunedCppi)?
        }
        ExperimentKind::Localize => {
            let t = localize_trial(cfg, seed)?;
            t.context(cfg, seed).fit(SchemeName::TunedCppi)?
        }
        ExperimentKind::BeamAlign => {
            let s = softmax_setup(cfg, seed)?;
            s.context(cfg, seed).fit(SchemeName::TunedCppi)?
        }
        other => {
            return invalid(format!(
                "λ̂ probing covers the convex experiments, not {other}"
            ))
        }
    };
    fit.tuning
        .ok_or_else(|| Error::InvalidState("tuned CPPI returned no λ̂ diagnostics".into()))
}

/// λ̂ of every trial at every sweep value, with λ forced to be estimated.
pub fn lambda_probe(cfg: &ExperimentConfig) -> Result<Vec<ProbeRow>> {
    cfg.validate()?;
    let mut c = cfg.clone();
    c.lambda = None;
    if !c.schemes.contains(&SchemeName::TunedCppi) {
        c.schemes.push(SchemeName::TunedCppi);
    }
    let mut grid = c.sweep.grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut rows = Vec::new();
    for v in grid {
        let at = c.at_sweep(v);
        for t in 0..at.trials {
            let e = estimate(&at, trial_seed(c.seed, c.experiment, v, t))?;
            rows.push(row(v, t, &e));
        }
    }
    Ok(rows)
}

pub fn format_probe(rows: &[ProbeRow]) -> String {
    let mut s = String::from("sweep trial lambda_hat raw clipped degenerate tr_H tr_V tr_C r\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{} {} {:.6} {:.6} {} {} {:.6e} {:.6e} {:.6e} {:.6e}",
            r.sweep,
            r.trial,
            r.lambda_hat,
            r.raw,
            r.clipped,
            r.degenerate,
            r.trace_h,
            r.trace_v,
            r.trace_c,
            r.r
        );
    }
    if !rows.is_empty() {
        let m = rows.iter().map(|r| r.lambda_hat).sum::<f64>() / rows.len() as f64;
        let _ = writeln!(s, "# mean lambda_hat {m:.6} over {} trials", rows.len());
    }
    s
}
