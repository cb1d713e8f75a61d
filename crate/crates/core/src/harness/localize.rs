use super::config::ExperimentConfig;
use super::mest::{Estimate, MEstContext};
use super::{test_count, Metrics, SchemeResult};
use crate::datasets::{gen_synthetic_rssi, Label, LabeledDataset, UnlabeledDataset};
use crate::error::{invalid, Result};
use crate::labelers::LabelerSpec;
use crate::losses::{fit_elm_hidden, LossModel};
use crate::rng::derive_seed;

/// Synthetic fingerprints split into labeled, unlabeled and held-out test
/// points, with the ELM ridge model used by every scheme.
#[derive(Debug, Clone)]
pub struct LocalizeTrial {
    pub model: LossModel,
    pub labeled: LabeledDataset,
    pub unlabeled: UnlabeledDataset,
    pub test: LabeledDataset,
    pub labeler: LabelerSpec,
}

impl LocalizeTrial {
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

    /// Mean absolute error of each coordinate over the test points.
    pub fn mae(&self, theta: &[f64]) -> Result<[f64; 2]> {
        let mut acc = [0.0; 2];
        for (x, y) in self.test.inputs().iter().zip(self.test.labels()) {
            let Label::Vector(p) = y else {
                return invalid("positions are vector labels");
            };
            let s = self.model.scores(theta, &self.model.features(x)?);
            acc[0] += (s[0] - p[0]).abs();
            acc[1] += (s[1] - p[1]).abs();
        }
        let m = self.test.len() as f64;
        Ok([acc[0] / m, acc[1] / m])
    }
}

pub fn localize_trial(cfg: &ExperimentConfig, seed: u64) -> Result<LocalizeTrial> {
    let r = &cfg.rssi;
    let n_test = test_count(cfg.n + cfg.big_n, r.test_fraction);
    let data = gen_synthetic_rssi(
        r.aps,
        r.area,
        r.pathloss,
        cfg.n + n_test,
        cfg.big_n,
        derive_seed(seed, &["data".into()]),
    )?;
    let lab_idx: Vec<usize> = (0..cfg.n).collect();
    let test_idx: Vec<usize> = (cfg.n..cfg.n + n_test).collect();
    let labeled = data.labeled.subset(&lab_idx);
    let test = data.labeled.subset(&test_idx);
    let unlabeled = data.unlabeled;
    let mut pool = labeled.inputs().to_vec();
    pool.extend_from_slice(unlabeled.inputs());
    let fmap = fit_elm_hidden(&pool, r.hidden, derive_seed(seed, &["elm".into()]))?;
    let model = LossModel::elm_ridge(r.aps, 2, r.ridge, fmap)?;
    let mut labeler = cfg.labeler.to_spec();
    labeler.seed = derive_seed(seed, &["labeler".into()]);
    Ok(LocalizeTrial {
        model,
        labeled,
        unlabeled,
        test,
        labeler,
    })
}

fn metrics(trial: &LocalizeTrial, e: &Estimate) -> Result<Metrics> {
    let [mx, my] = trial.mae(&e.theta)?;
    let mut m = vec![("mae_x", mx), ("mae_y", my)];
    if let Some(l) = e.lambda {
        m.push(("lambda", l));
    }
    Ok(m)
}

pub(super) fn run(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<SchemeResult>> {
    let trial = localize_trial(cfg, seed)?;
    let ctx = trial.context(cfg, seed);
    Ok(cfg
        .schemes
        .iter()
        .map(|&scheme| SchemeResult {
            scheme,
            outcome: ctx.fit(scheme).and_then(|e| metrics(&trial, &e)),
        })
        .collect())
}
