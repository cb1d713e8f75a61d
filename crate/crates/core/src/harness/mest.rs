//! Scheme fitting for the convex experiments. One context per trial; the
//! cross-fit and split labelers are trained once and shared, so tuned
//! schemes at λ ∈ {0, 1} run the exact same arithmetic as their endpoints.

use std::cell::OnceCell;

use super::config::{ExperimentConfig, SchemeName};
use crate::datasets::{FoldAssignment, LabeledDataset, UnlabeledDataset};
use crate::error::{invalid, Result};
use crate::estimators::{
    erm_objective, solve_with, split_labeled, ss_objective, tuned_cppi_objective_from,
    tuned_ppi_objective_from, CrossFitPredictions, Objective, PpiPredictions, SolverOptions,
};
use crate::labelers::{Labeler, Trainer};
use crate::losses::LossModel;
use crate::rng::derive_seed;
use crate::tuning::{cross_fit, tuned_cppi_fit_from, tuned_ppi_fit, TuningEstimate, TuningOptions};

#[derive(Debug, Clone)]
pub struct Estimate {
    pub theta: Vec<f64>,
    /// λ used by a tuned scheme.
    pub lambda: Option<f64>,
    /// λ̂ diagnostics when λ was estimated.
    pub tuning: Option<TuningEstimate>,
}

struct CrossFit {
    folds: FoldAssignment,
    models: Vec<Labeler>,
    preds: CrossFitPredictions,
}

struct Split {
    rect: LabeledDataset,
    preds: PpiPredictions,
}

pub struct MEstContext<'a> {
    pub model: &'a LossModel,
    pub labeled: &'a LabeledDataset,
    pub unlabeled: &'a UnlabeledDataset,
    pub trainer: &'a dyn Trainer,
    pub cfg: &'a ExperimentConfig,
    pub seed: u64,
    pub solver: SolverOptions,
    cross: OnceCell<CrossFit>,
    split: OnceCell<Split>,
}

impl<'a> MEstContext<'a> {
    pub fn new(
        model: &'a LossModel,
        labeled: &'a LabeledDataset,
        unlabeled: &'a UnlabeledDataset,
        trainer: &'a dyn Trainer,
        cfg: &'a ExperimentConfig,
        seed: u64,
    ) -> Self {
        Self {
            model,
            labeled,
            unlabeled,
            trainer,
            cfg,
            seed,
            solver: SolverOptions::default(),
            cross: OnceCell::new(),
            split: OnceCell::new(),
        }
    }

    fn cppi_seed(&self) -> u64 {
        derive_seed(self.seed, &["cppi".into()])
    }

    fn ppi_seed(&self) -> u64 {
        derive_seed(self.seed, &["ppi".into()])
    }

    fn cross(&self) -> Result<&CrossFit> {
        if let Some(c) = self.cross.get() {
            return Ok(c);
        }
        let (folds, models, preds) = cross_fit(
            self.labeled,
            self.unlabeled,
            self.cfg.k,
            self.trainer,
            self.cppi_seed(),
        )?;
        Ok(self.cross.get_or_init(|| CrossFit {
            folds,
            models,
            preds,
        }))
    }

    /// Same split and labeler seeds as [`tuned_ppi_fit`].
    fn split(&self) -> Result<&Split> {
        if let Some(s) = self.split.get() {
            return Ok(s);
        }
        let seed = self.ppi_seed();
        let (train, rect) = split_labeled(
            self.labeled.len(),
            self.cfg.split_fraction,
            derive_seed(seed, &["split".into()]),
        )?;
        let f = self.trainer.fit_subset(
            self.labeled,
            &train,
            derive_seed(seed, &["labeler".into()]),
        )?;
        let rect = self.labeled.subset(&rect);
        let preds = PpiPredictions::new(&f, &rect, self.unlabeled);
        Ok(self.split.get_or_init(|| Split { rect, preds }))
    }

    fn solve(&self, obj: &Objective) -> Result<Vec<f64>> {
        Ok(solve_with(obj, &self.solver)?.theta)
    }

    fn plain(&self, theta: Vec<f64>) -> Estimate {
        Estimate {
            theta,
            lambda: None,
            tuning: None,
        }
    }

    fn fixed(&self, theta: Vec<f64>, lambda: f64) -> Estimate {
        Estimate {
            theta,
            lambda: Some(lambda),
            tuning: None,
        }
    }

    pub fn tuning_options(&self) -> TuningOptions {
        TuningOptions {
            folds: self.cfg.k,
            bootstrap_runs: self.cfg.b,
            lambda_init: self.cfg.lambda_init,
            solver: self.solver,
        }
    }

    pub fn fit(&self, scheme: SchemeName) -> Result<Estimate> {
        let (m, lab, unl) = (self.model, self.labeled, self.unlabeled);
        match scheme {
            SchemeName::Erm => Ok(self.plain(self.solve(&erm_objective(m, lab)?)?)),
            SchemeName::Ss => {
                let all: Vec<usize> = (0..lab.len()).collect();
                let f =
                    self.trainer
                        .fit_subset(lab, &all, derive_seed(self.seed, &["ss".into()]))?;
                Ok(self.plain(self.solve(&ss_objective(m, lab, unl, &f, self.cfg.gamma)?)?))
            }
            SchemeName::Ppi => {
                let s = self.split()?;
                Ok(self
                    .plain(self.solve(&tuned_ppi_objective_from(m, &s.rect, unl, &s.preds, 1.0)?)?))
            }
            SchemeName::TunedPpi => match self.cfg.lambda {
                Some(l) => {
                    let s = self.split()?;
                    Ok(self.fixed(
                        self.solve(&tuned_ppi_objective_from(m, &s.rect, unl, &s.preds, l)?)?,
                        l,
                    ))
                }
                None => {
                    let fit = tuned_ppi_fit(
                        m,
                        lab,
                        unl,
                        self.trainer,
                        self.cfg.split_fraction,
                        self.cfg.lambda_init,
                        &self.solver,
                        self.ppi_seed(),
                    )?;
                    Ok(Estimate {
                        theta: fit.theta,
                        lambda: Some(fit.estimate.lambda_hat),
                        tuning: Some(fit.estimate),
                    })
                }
            },
            SchemeName::Cppi => {
                let c = self.cross()?;
                Ok(
                    self.plain(
                        self.solve(&tuned_cppi_objective_from(m, lab, unl, &c.preds, 1.0)?)?,
                    ),
                )
            }
            SchemeName::TunedCppi => {
                let c = self.cross()?;
                match self.cfg.lambda {
                    Some(l) => Ok(self.fixed(
                        self.solve(&tuned_cppi_objective_from(m, lab, unl, &c.preds, l)?)?,
                        l,
                    )),
                    None => {
                        let fit = tuned_cppi_fit_from(
                            m,
                            lab,
                            unl,
                            self.trainer,
                            &self.tuning_options(),
                            self.cppi_seed(),
                            c.folds.clone(),
                            c.models.clone(),
                            c.preds.clone(),
                        )?;
                        Ok(Estimate {
                            theta: fit.theta,
                            lambda: Some(fit.estimate.lambda_hat),
                            tuning: Some(fit.estimate),
                        })
                    }
                }
            }
            other => invalid(format!("{} is not an M-estimation scheme", other.name())),
        }
    }

    /// ERM on the PPI rectifier part alone (the λ = 0 end of tuned PPI).
    pub fn rectifier_erm(&self) -> Result<Vec<f64>> {
        self.solve(&erm_objective(self.model, &self.split()?.rect)?)
    }

    /// Classes predicted by the cross-fit and split labelers, plus the SS
    /// labeler when requested.
    pub fn predicted_labels(&self, schemes: &[SchemeName]) -> Result<Vec<crate::datasets::Label>> {
        let mut out = Vec::new();
        if schemes
            .iter()
            .any(|s| matches!(s, SchemeName::Cppi | SchemeName::TunedCppi))
        {
            let c = self.cross()?;
            out.extend(c.preds.held_out.iter().cloned());
            out.extend(c.preds.unlabeled.iter().flatten().cloned());
        }
        if schemes
            .iter()
            .any(|s| matches!(s, SchemeName::Ppi | SchemeName::TunedPpi))
        {
            let s = self.split()?;
            out.extend(s.preds.labeled.iter().cloned());
            out.extend(s.preds.unlabeled.iter().cloned());
        }
        if schemes.contains(&SchemeName::Ss) {
            let all: Vec<usize> = (0..self.labeled.len()).collect();
            let f = self.trainer.fit_subset(
                self.labeled,
                &all,
                derive_seed(self.seed, &["ss".into()]),
            )?;
            out.extend(f.predict_all(self.unlabeled.inputs()));
        }
        Ok(out)
    }
}
