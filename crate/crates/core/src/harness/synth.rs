use super::config::{ExperimentConfig, ExperimentKind};
use super::mest::{Estimate, MEstContext};
use super::{Metrics, SchemeResult};
use crate::datasets::{gen_synthetic, LabeledDataset, SynthParams, UnlabeledDataset};
use crate::error::{invalid, Result};
use crate::labelers::LabelerSpec;
use crate::losses::{FeatureMap, LossModel};
use crate::rng::derive_seed;

/// Data, loss model and true parameter of one synthetic trial.
#[derive(Debug, Clone)]
pub struct SynthTrial {
    pub model: LossModel,
    pub labeled: LabeledDataset,
    pub unlabeled: UnlabeledDataset,
    pub theta_star: Vec<f64>,
    pub labeler: LabelerSpec,
}

impl SynthTrial {
    pub fn context<'a>(&'a self, cfg: &'a ExperimentConfig, seed: u64) -> MEstContext<'a> {
        MEstContext::new(
            &self.model,
            &self.labeled,
            &self.unlabeled,
            &self.labeler,
            cfg,
            seed,
        )
    }

    pub fn mse(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(&self.theta_star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Mean estimation targets `μ`. Linear regression fits the first `d − 1`
/// coordinates without intercept (`μ = 0`), so the dropped coordinate acts
/// as noise the labeler can still see; the target is `β` on the kept ones.
pub fn synth_trial(cfg: &ExperimentConfig, seed: u64) -> Result<SynthTrial> {
    let s = &cfg.synth;
    let p = SynthParams {
        d: s.d,
        mu: s.mu,
        sigma: s.sigma,
        r: s.r2.sqrt(),
        seed: derive_seed(seed, &["data".into()]),
    };
    let (labeled, unlabeled) = gen_synthetic(&p, cfg.n, cfg.big_n)?;
    let (model, theta_star) = match cfg.experiment {
        ExperimentKind::SynthMean => (LossModel::mean_estimation(), vec![s.mu]),
        ExperimentKind::SynthLinreg => {
            if s.d < 2 {
                return invalid("linear regression needs d >= 2");
            }
            let keep: Vec<usize> = (0..s.d - 1).collect();
            let star = vec![p.beta_coefficient(); keep.len()];
            (
                LossModel::linear_regression(s.d, FeatureMap::Select(keep))?,
                star,
            )
        }
        other => return invalid(format!("{other} is not a synthetic experiment")),
    };
    let mut labeler = cfg.labeler.to_spec();
    labeler.seed = derive_seed(seed, &["labeler".into()]);
    Ok(SynthTrial {
        model,
        labeled,
        unlabeled,
        theta_star,
        labeler,
    })
}

fn metrics(trial: &SynthTrial, e: &Estimate) -> Metrics {
    let mut m = vec![("mse", trial.mse(&e.theta))];
    if let Some(l) = e.lambda {
        m.push(("lambda", l));
    }
    m
}

pub(super) fn run(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<SchemeResult>> {
    let trial = synth_trial(cfg, seed)?;
    let ctx = trial.context(cfg, seed);
    Ok(cfg
        .schemes
        .iter()
        .map(|&scheme| SchemeResult {
            scheme,
            outcome: ctx.fit(scheme).map(|e| metrics(&trial, &e)),
        })
        .collect())
}
