//! Empirical objectives (ERM, SS, PPI, tuned PPI, CPPI, tuned CPPI) and their
//! minimization.

mod solver;

pub use solver::{gradient_descent, solve, solve_with, SolveReport, SolverOptions};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datasets::{FoldAssignment, Label, LabeledDataset, UnlabeledDataset};
use crate::error::{invalid, Result};
use crate::labelers::Labeler;
use crate::losses::{add_curvature, add_outer, norm_sq, LossModel};
use crate::rng::rng_from_seed;

pub const DEFAULT_SS_GAMMA: f64 = 1.0;
pub const DEFAULT_SPLIT_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaChoice {
    Fixed(f64),
    /// Estimated from the data.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scheme {
    Erm,
    Ss {
        gamma: f64,
    },
    Ppi {
        split_fraction: f64,
    },
    TunedPpi {
        lambda: LambdaChoice,
        split_fraction: f64,
    },
    Cppi,
    TunedCppi {
        lambda: LambdaChoice,
    },
}

impl Scheme {
    pub fn validate(&self) -> Result<()> {
        let frac_ok = |f: f64| f > 0.0 && f < 1.0;
        match *self {
            Scheme::Ss { gamma } if !(gamma >= 0.0) => invalid("SS gamma must be nonnegative"),
            Scheme::Ppi { split_fraction } | Scheme::TunedPpi { split_fraction, .. }
                if !frac_ok(split_fraction) =>
            {
                invalid("split fraction must lie in (0, 1)")
            }
            Scheme::TunedPpi {
                lambda: LambdaChoice::Fixed(l),
                ..
            }
            | Scheme::TunedCppi {
                lambda: LambdaChoice::Fixed(l),
            } => check_lambda(l),
            _ => Ok(()),
        }
    }
}

pub fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        invalid(format!("lambda must lie in [0, 1], got {lambda}"))
    }
}

#[derive(Debug, Clone)]
struct Group {
    psi: Vec<f64>,
    terms: Vec<(Label, f64)>,
}

/// Weighted sum of per-sample losses, grouped by input point so features and
/// scores are computed once per point:
/// `L(θ) = Σ_g Σ_t w_t ℓ_θ(x_g, y_t)`.
#[derive(Debug, Clone)]
pub struct Objective {
    model: LossModel,
    groups: Vec<Group>,
    reg_weight: f64,
}

impl Objective {
    pub fn new(model: LossModel) -> Self {
        Self {
            model,
            groups: Vec::new(),
            reg_weight: 0.0,
        }
    }

    /// Add the terms `w · ℓ_θ(x, y)` for each `(y, w)` in `terms`.
    pub fn push(&mut self, x: &[f64], terms: Vec<(Label, f64)>) -> Result<()> {
        let psi = self.model.features(x)?;
        let s = vec![0.0; self.model.link_dim()];
        for (y, w) in &terms {
            self.model.term(&s, y)?;
            self.reg_weight += w;
        }
        self.groups.push(Group { psi, terms });
        Ok(())
    }

    pub fn model(&self) -> &LossModel {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.model.dim_theta()
    }

    /// Sum of all term weights (the multiplier of the regularizer).
    pub fn total_weight(&self) -> f64 {
        self.reg_weight
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        self.eval(theta, None)
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.eval(theta, Some(&mut g));
        g
    }

    pub fn value_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; self.dim()];
        let v = self.eval(theta, Some(&mut g));
        (v, g)
    }

    fn eval(&self, theta: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        assert_eq!(theta.len(), self.dim(), "theta dimension");
        let mut value = 0.0;
        for g in &self.groups {
            let s = self.model.scores(theta, &g.psi);
            for (y, w) in &g.terms {
                let (v, ds) = self.model.term(&s, y).expect("labels validated on push");
                value += w * v;
                if let Some(gr) = grad.as_deref_mut() {
                    add_outer(gr, &ds, &g.psi, *w);
                }
            }
        }
        let gamma = self.model.gamma();
        if gamma > 0.0 {
            value += self.reg_weight * gamma * norm_sq(theta);
            if let Some(gr) = grad {
                gr.iter_mut()
                    .zip(theta)
                    .for_each(|(g, t)| *g += 2.0 * self.reg_weight * gamma * t);
            }
        }
        value
    }

    pub fn hessian(&self, theta: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut h = DMatrix::identity(d, d) * (2.0 * self.reg_weight * self.model.gamma());
        for g in &self.groups {
            let w: f64 = g
                .terms
                .iter()
                .map(|(y, w)| w * self.model.label_mass(y))
                .sum();
            if w != 0.0 {
                let s = self.model.scores(theta, &g.psi);
                add_curvature(&mut h, &self.model.curvature(&s), &g.psi, w);
            }
        }
        h
    }
}

fn check_nonempty(labeled: &LabeledDataset) -> Result<f64> {
    if labeled.is_empty() {
        return invalid("labeled dataset is empty");
    }
    Ok(labeled.len() as f64)
}

/// `(1/n) Σ ℓ_θ(X_i, Y_i)`
pub fn erm_objective(model: &LossModel, labeled: &LabeledDataset) -> Result<Objective> {
    let n = check_nonempty(labeled)?;
    let mut obj = Objective::new(model.clone());
    for (x, y) in labeled.inputs().iter().zip(labeled.labels()) {
        obj.push(x, vec![(y.clone(), 1.0 / n)])?;
    }
    Ok(obj)
}

/// `n/(n+N)·L_ERM(θ) + γ/(n+N)·Σ ℓ_θ(X̃_i, f(X̃_i))`
pub fn ss_objective(
    model: &LossModel,
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    f: &Labeler,
    gamma: f64,
) -> Result<Objective> {
    if !(gamma >= 0.0) {
        return invalid("gamma must be nonnegative");
    }
    check_nonempty(labeled)?;
    let total = (labeled.len() + unlabeled.len()) as f64;
    let mut obj = Objective::new(model.clone());
    for (x, y) in labeled.inputs().iter().zip(labeled.labels()) {
        obj.push(x, vec![(y.clone(), 1.0 / total)])?;
    }
    for (x, fy) in unlabeled
        .inputs()
        .iter()
        .zip(f.predict_all(unlabeled.inputs()))
    {
        obj.push(x, vec![(fy, gamma / total)])?;
    }
    Ok(obj)
}

/// Predictions of a single labeler on the rectifier set and the unlabeled set.
#[derive(Debug, Clone)]
pub struct PpiPredictions {
    pub labeled: Vec<Label>,
    pub unlabeled: Vec<Label>,
}

impl PpiPredictions {
    pub fn new(f: &Labeler, labeled: &LabeledDataset, unlabeled: &UnlabeledDataset) -> Self {
        Self {
            labeled: f.predict_all(labeled.inputs()),
            unlabeled: f.predict_all(unlabeled.inputs()),
        }
    }
}

/// `L_ERM(θ) + λ[(1/N) Σ ℓ_θ(X̃, f(X̃)) − (1/n) Σ ℓ_θ(X, f(X))]`
pub fn tuned_ppi_objective_from(
    model: &LossModel,
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    preds: &PpiPredictions,
    lambda: f64,
) -> Result<Objective> {
    check_lambda(lambda)?;
    let n = check_nonempty(labeled)?;
    let big_n = unlabeled.len() as f64;
    if preds.labeled.len() != labeled.len() || preds.unlabeled.len() != unlabeled.len() {
        return invalid("prediction counts do not match the datasets");
    }
    let mut obj = Objective::new(model.clone());
    for ((x, y), fy) in labeled
        .inputs()
        .iter()
        .zip(labeled.labels())
        .zip(&preds.labeled)
    {
        obj.push(x, vec![(y.clone(), 1.0 / n), (fy.clone(), -lambda / n)])?;
    }
    for (x, fy) in unlabeled.inputs().iter().zip(&preds.unlabeled) {
        obj.push(x, vec![(fy.clone(), lambda / big_n)])?;
    }
    Ok(obj)
}

pub fn tuned_ppi_objective(
    model: &LossModel,
    labeled_rectifier: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    f: &Labeler,
    lambda: f64,
) -> Result<Objective> {
    let preds = PpiPredictions::new(f, labeled_rectifier, unlabeled);
    tuned_ppi_objective_from(model, labeled_rectifier, unlabeled, &preds, lambda)
}

/// `(1/N) Σ ℓ_θ(X̃, f(X̃)) − [(1/n) Σ ℓ_θ(X, f(X)) − L_ERM(θ)]`
pub fn ppi_objective(
    model: &LossModel,
    labeled_rectifier: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    f: &Labeler,
) -> Result<Objective> {
    tuned_ppi_objective(model, labeled_rectifier, unlabeled, f, 1.0)
}

/// Fold-model predictions: `f^{k(i)}(X_i)` on each labeled point (its own
/// fold's model) and `f^k(X̃_i)` for every k on each unlabeled point.
#[derive(Debug, Clone)]
pub struct CrossFitPredictions {
    pub held_out: Vec<Label>,
    pub unlabeled: Vec<Vec<Label>>,
}

impl CrossFitPredictions {
    pub fn new(
        labeled: &LabeledDataset,
        folds: &FoldAssignment,
        fold_models: &[Labeler],
        unlabeled: &UnlabeledDataset,
    ) -> Result<Self> {
        if folds.n() != labeled.len() || fold_models.len() != folds.k() {
            return invalid("folds, fold models and labeled data disagree in size");
        }
        let per_model: Vec<Vec<Label>> = fold_models
            .iter()
            .map(|f| f.predict_all(unlabeled.inputs()))
            .collect();
        Ok(Self {
            held_out: (0..labeled.len())
                .map(|i| fold_models[folds.fold_of(i)].predict(labeled.input(i)))
                .collect(),
            unlabeled: (0..unlabeled.len())
                .map(|i| per_model.iter().map(|p| p[i].clone()).collect())
                .collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.unlabeled.first().map_or(0, Vec::len)
    }
}

/// `L_ERM(θ) + λ[(1/(KN)) Σ_k Σ_i ℓ_θ(X̃_i, f^k(X̃_i)) − (1/n) Σ_k Σ_{i∈D_k} ℓ_θ(X_i, f^k(X_i))]`
pub fn tuned_cppi_objective_from(
    model: &LossModel,
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    preds: &CrossFitPredictions,
    lambda: f64,
) -> Result<Objective> {
    check_lambda(lambda)?;
    let n = check_nonempty(labeled)?;
    if preds.held_out.len() != labeled.len() || preds.unlabeled.len() != unlabeled.len() {
        return invalid("prediction counts do not match the datasets");
    }
    let kn = (preds.k() * unlabeled.len()) as f64;
    let mut obj = Objective::new(model.clone());
    for ((x, y), fy) in labeled
        .inputs()
        .iter()
        .zip(labeled.labels())
        .zip(&preds.held_out)
    {
        obj.push(x, vec![(y.clone(), 1.0 / n), (fy.clone(), -lambda / n)])?;
    }
    for (x, fs) in unlabeled.inputs().iter().zip(&preds.unlabeled) {
        obj.push(x, fs.iter().map(|fy| (fy.clone(), lambda / kn)).collect())?;
    }
    Ok(obj)
}

pub fn tuned_cppi_objective(
    model: &LossModel,
    labeled: &LabeledDataset,
    folds: &FoldAssignment,
    fold_models: &[Labeler],
    unlabeled: &UnlabeledDataset,
    lambda: f64,
) -> Result<Objective> {
    let preds = CrossFitPredictions::new(labeled, folds, fold_models, unlabeled)?;
    tuned_cppi_objective_from(model, labeled, unlabeled, &preds, lambda)
}

pub fn cppi_objective(
    model: &LossModel,
    labeled: &LabeledDataset,
    folds: &FoldAssignment,
    fold_models: &[Labeler],
    unlabeled: &UnlabeledDataset,
) -> Result<Objective> {
    tuned_cppi_objective(model, labeled, folds, fold_models, unlabeled, 1.0)
}

/// Random split of `0..n` into a labeler-training part (`fraction` of the
/// points, at least one) and a rectifier part (at least one).
pub fn split_labeled(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return invalid("split fraction must lie in (0, 1)");
    }
    if n < 2 {
        return invalid("need at least two labeled points to split");
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let cut = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut train = idx[..cut].to_vec();
    let mut rect = idx[cut..].to_vec();
    train.sort_unstable();
    rect.sort_unstable();
    Ok((train, rect))
}
