//! Choosing λ: Hessian plug-in, bootstrap covariance estimates, the clipped
//! λ̂ formula and the end-to-end tuned CPPI fit.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::datasets::{make_folds, FoldAssignment, Label, LabeledDataset, UnlabeledDataset};
use crate::error::{invalid, Error, Result};
use crate::estimators::{
    check_lambda, erm_objective, solve_with, split_labeled, tuned_cppi_objective_from,
    tuned_ppi_objective_from, CrossFitPredictions, PpiPredictions, SolverOptions,
};
use crate::labelers::{bootstrap_models, train_fold_models, BootstrapModel, Labeler, Trainer};
use crate::linalg::{
    covariance, cross_covariance, rows_to_matrix, symmetrize, FlooredEigen, HESSIAN_EIG_FLOOR,
};
use crate::losses::LossModel;
use crate::rng::derive_seed;

pub const DEFAULT_BOOTSTRAP_RUNS: usize = 30;
pub const DEFAULT_LAMBDA_INIT: f64 = 0.5;
/// Below this `tr(H⁻¹VH⁻¹)` the labeler carries no usable variance.
pub const DEGENERATE_TRACE: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct TuningEstimate {
    pub lambda_hat: f64,
    /// Unclipped value of the plug-in formula.
    pub raw: f64,
    pub clipped: bool,
    pub degenerate: bool,
    #[serde(skip)]
    pub hessian_hat: DMatrix<f64>,
    #[serde(skip)]
    pub var_fbar_hat: DMatrix<f64>,
    #[serde(skip)]
    pub crosscov_hat: DMatrix<f64>,
    /// `n / N`
    pub r: f64,
}

/// `(1/n) Σ ∇²ℓ_θ(X_i, Y_i)`
pub fn estimate_hessian(
    model: &LossModel,
    theta: &[f64],
    labeled: &LabeledDataset,
) -> Result<DMatrix<f64>> {
    model.check_theta(theta)?;
    Ok(erm_objective(model, labeled)?.hessian(theta))
}

fn grad_rows<'a>(
    model: &LossModel,
    theta: &[f64],
    pairs: impl Iterator<Item = (&'a [f64], Label)>,
) -> Result<Vec<Vec<f64>>> {
    pairs.map(|(x, y)| model.grad(theta, x, &y)).collect()
}

/// Covariance over the unlabeled set of `∇ℓ_θ(X̃_i, f̄(X̃_i))`, where `f̄`
/// averages the bootstrap models' predictions.
pub fn estimate_var_fbar(
    boot: &[BootstrapModel],
    theta: &[f64],
    unlabeled: &UnlabeledDataset,
    model: &LossModel,
) -> Result<DMatrix<f64>> {
    if boot.is_empty() {
        return invalid("no bootstrap models");
    }
    model.check_theta(theta)?;
    let classes = model.classes();
    let per_model: Vec<Vec<Label>> = boot
        .iter()
        .map(|b| b.labeler.predict_all(unlabeled.inputs()))
        .collect();
    let fbar: Vec<Label> = (0..unlabeled.len())
        .map(|i| {
            let preds: Vec<Label> = per_model.iter().map(|p| p[i].clone()).collect();
            Label::average(&preds, classes)
        })
        .collect::<Result<_>>()?;
    let rows = grad_rows(
        model,
        theta,
        unlabeled.inputs().iter().map(Vec::as_slice).zip(fbar),
    )?;
    Ok(covariance(&rows_to_matrix(&rows, model.dim_theta())))
}

/// Cross-covariance of `(∇ℓ_θ(X_i, Y_i), ∇ℓ_θ(X_i, f^b(X_i)))` pooled over
/// runs `b` and the points each run did not train on.
pub fn estimate_crosscov(
    boot: &[BootstrapModel],
    theta: &[f64],
    labeled: &LabeledDataset,
    model: &LossModel,
) -> Result<DMatrix<f64>> {
    model.check_theta(theta)?;
    let n = labeled.len();
    let mut true_rows = Vec::new();
    let mut pred_rows = Vec::new();
    for b in boot {
        for i in b.held_out(n) {
            let x = labeled.input(i);
            true_rows.push(model.grad(theta, x, labeled.label(i))?);
            pred_rows.push(model.grad(theta, x, &b.labeler.predict(x))?);
        }
    }
    if true_rows.is_empty() {
        return Err(Error::InvalidState(
            "no held-out points in any bootstrap run".into(),
        ));
    }
    let d = model.dim_theta();
    Ok(cross_covariance(
        &rows_to_matrix(&true_rows, d),
        &rows_to_matrix(&pred_rows, d),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaHat {
    pub lambda: f64,
    pub raw: f64,
    pub clipped: bool,
    pub degenerate: bool,
}

/// `tr(H⁻¹(C + Cᵀ)H⁻¹) / (2(1 + n/N)·tr(H⁻¹VH⁻¹))`, clipped to `[0, 1]`.
pub fn lambda_hat(
    h: &DMatrix<f64>,
    v: &DMatrix<f64>,
    c: &DMatrix<f64>,
    n: usize,
    big_n: usize,
) -> Result<LambdaHat> {
    let d = h.nrows();
    if v.shape() != (d, d) || c.shape() != (d, d) {
        return invalid("H, V and C must share one square shape");
    }
    if big_n == 0 {
        return invalid("N must be positive");
    }
    let (den_trace, num) = if d > EIGEN_MAX_DIM {
        match cholesky_traces(h, v, c) {
            Some(t) => t,
            None => eigen_traces(h, v, c)?,
        }
    } else {
        eigen_traces(h, v, c)?
    };
    if !(den_trace > DEGENERATE_TRACE) {
        return Ok(LambdaHat {
            lambda: 0.0,
            raw: 0.0,
            clipped: false,
            degenerate: true,
        });
    }
    let r = n as f64 / big_n as f64;
    Ok(clip(num / (2.0 * (1.0 + r) * den_trace)))
}

/// Above this dimension the traces come from a Cholesky factor instead of a
/// full eigendecomposition.
pub const EIGEN_MAX_DIM: usize = 64;

/// `(tr(H⁻¹VH⁻¹), tr(H⁻¹(C + Cᵀ)H⁻¹))` with floored eigenvalues.
fn eigen_traces(h: &DMatrix<f64>, v: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<(f64, f64)> {
    let eig = FlooredEigen::new(h, HESSIAN_EIG_FLOOR)?;
    Ok((
        eig.sandwich_trace(v),
        eig.sandwich_trace(&(c + c.transpose())),
    ))
}

/// Same traces via `tr(H⁻¹AH⁻¹) = ⟨H⁻², A⟩`, with `H` shifted by the relative
/// floor times its largest diagonal entry. `None` if the factorization fails.
fn cholesky_traces(h: &DMatrix<f64>, v: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<(f64, f64)> {
    if h.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let d = h.nrows();
    let mut hs = symmetrize(h);
    let top = hs.diagonal().max();
    if !(top > 0.0) {
        return None;
    }
    for i in 0..d {
        hs[(i, i)] += HESSIAN_EIG_FLOOR * top;
    }
    let inv = hs.cholesky()?.inverse();
    let w = &inv * &inv;
    let den = w.dot(v);
    // ⟨W, C + Cᵀ⟩ = 2⟨W, C⟩ for symmetric W
    let num = 2.0 * w.dot(c);
    Some((den, num))
}

fn clip(raw: f64) -> LambdaHat {
    let lambda = raw.clamp(0.0, 1.0);
    LambdaHat {
        lambda,
        raw,
        clipped: lambda != raw,
        degenerate: false,
    }
}

/// `cov(Y, f̄) / ((1 + r)·var(f̄))` over labeled points, clipped to `[0, 1]`.
pub fn lambda_hat_mean(labels: &[f64], fbar: &[f64], r: f64) -> Result<LambdaHat> {
    if labels.len() != fbar.len() || labels.is_empty() {
        return invalid("labels and predictions must be non-empty and of equal length");
    }
    let m = labels.len() as f64;
    let my = labels.iter().sum::<f64>() / m;
    let mf = fbar.iter().sum::<f64>() / m;
    let cov = labels
        .iter()
        .zip(fbar)
        .map(|(y, f)| (y - my) * (f - mf))
        .sum::<f64>()
        / m;
    let var = fbar.iter().map(|f| (f - mf) * (f - mf)).sum::<f64>() / m;
    if !(var > 0.0) {
        return Ok(LambdaHat {
            lambda: 0.0,
            raw: 0.0,
            clipped: false,
            degenerate: true,
        });
    }
    Ok(clip(cov / ((1.0 + r) * var)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningOptions {
    pub folds: usize,
    pub bootstrap_runs: usize,
    pub lambda_init: f64,
    pub solver: SolverOptions,
}

impl Default for TuningOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            bootstrap_runs: DEFAULT_BOOTSTRAP_RUNS,
            lambda_init: DEFAULT_LAMBDA_INIT,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TunedFit {
    pub theta: Vec<f64>,
    /// Solution at the initial λ.
    pub theta_init: Vec<f64>,
    pub estimate: TuningEstimate,
    pub folds: FoldAssignment,
    pub fold_models: Vec<Labeler>,
    pub predictions: CrossFitPredictions,
}

/// Cross-fitting: folds, fold models and their predictions.
pub fn cross_fit(
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    k: usize,
    trainer: &dyn Trainer,
    seed: u64,
) -> Result<(FoldAssignment, Vec<Labeler>, CrossFitPredictions)> {
    let folds = make_folds(labeled.len(), k, derive_seed(seed, &["folds".into()]))?;
    let models = train_fold_models(
        labeled,
        &folds,
        trainer,
        derive_seed(seed, &["fold-models".into()]),
    )?;
    let preds = CrossFitPredictions::new(labeled, &folds, &models, unlabeled)?;
    Ok((folds, models, preds))
}

/// Tuned CPPI with λ chosen from the data: solve at `lambda_init`, estimate
/// the Hessian there, estimate the covariances from bootstrap refits, compute
/// λ̂ and solve again.
pub fn tuned_cppi_fit(
    model: &LossModel,
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    trainer: &dyn Trainer,
    opts: &TuningOptions,
    seed: u64,
) -> Result<TunedFit> {
    let (folds, fold_models, preds) = cross_fit(labeled, unlabeled, opts.folds, trainer, seed)?;
    tuned_cppi_fit_from(
        model,
        labeled,
        unlabeled,
        trainer,
        opts,
        seed,
        folds,
        fold_models,
        preds,
    )
}

/// As [`tuned_cppi_fit`], reusing already trained fold models.
#[allow(clippy::too_many_arguments)]
pub fn tuned_cppi_fit_from(
    model: &LossModel,
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    trainer: &dyn Trainer,
    opts: &TuningOptions,
    seed: u64,
    folds: FoldAssignment,
    fold_models: Vec<Labeler>,
    predictions: CrossFitPredictions,
) -> Result<TunedFit> {
    check_lambda(opts.lambda_init)?;
    let init =
        tuned_cppi_objective_from(model, labeled, unlabeled, &predictions, opts.lambda_init)?;
    let theta_init = solve_with(&init, &opts.solver)?.theta;
    let h = estimate_hessian(model, &theta_init, labeled)?;
    let boot = bootstrap_models(
        labeled,
        opts.folds,
        opts.bootstrap_runs,
        trainer,
        derive_seed(seed, &["bootstrap".into()]),
    )?;
    let v = estimate_var_fbar(&boot, &theta_init, unlabeled, model)?;
    let c = estimate_crosscov(&boot, &theta_init, labeled, model)?;
    let lh = lambda_hat(&h, &v, &c, labeled.len(), unlabeled.len())?;
    let fin = tuned_cppi_objective_from(model, labeled, unlabeled, &predictions, lh.lambda)?;
    let theta = solve_with(&fin, &opts.solver)?.theta;
    Ok(TunedFit {
        theta,
        theta_init,
        estimate: TuningEstimate {
            lambda_hat: lh.lambda,
            raw: lh.raw,
            clipped: lh.clipped,
            degenerate: lh.degenerate,
            hessian_hat: h,
            var_fbar_hat: v,
            crosscov_hat: c,
            r: labeled.len() as f64 / unlabeled.len() as f64,
        },
        folds,
        fold_models,
        predictions,
    })
}

#[derive(Debug, Clone)]
pub struct TunedPpiFit {
    pub theta: Vec<f64>,
    pub estimate: TuningEstimate,
}

/// Tuned PPI with λ from the same plug-in formula: one labeler trained on
/// the first part of the split, `V` from its unlabeled predictions and `C`
/// from the rectifier points.
#[allow(clippy::too_many_arguments)]
pub fn tuned_ppi_fit(
    model: &LossModel,
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    trainer: &dyn Trainer,
    split_fraction: f64,
    lambda_init: f64,
    solver: &SolverOptions,
    seed: u64,
) -> Result<TunedPpiFit> {
    check_lambda(lambda_init)?;
    let (train, rect) = split_labeled(
        labeled.len(),
        split_fraction,
        derive_seed(seed, &["split".into()]),
    )?;
    let f = trainer.fit_subset(labeled, &train, derive_seed(seed, &["labeler".into()]))?;
    let rect = labeled.subset(&rect);
    let preds = PpiPredictions::new(&f, &rect, unlabeled);
    let init = tuned_ppi_objective_from(model, &rect, unlabeled, &preds, lambda_init)?;
    let theta0 = solve_with(&init, solver)?.theta;
    let h = estimate_hessian(model, &theta0, &rect)?;
    let d = model.dim_theta();
    let urows = grad_rows(
        model,
        &theta0,
        unlabeled
            .inputs()
            .iter()
            .map(Vec::as_slice)
            .zip(preds.unlabeled.iter().cloned()),
    )?;
    let v = covariance(&rows_to_matrix(&urows, d));
    let trows = grad_rows(
        model,
        &theta0,
        rect.inputs()
            .iter()
            .map(Vec::as_slice)
            .zip(rect.labels().iter().cloned()),
    )?;
    let prows = grad_rows(
        model,
        &theta0,
        rect.inputs()
            .iter()
            .map(Vec::as_slice)
            .zip(preds.labeled.iter().cloned()),
    )?;
    let c = cross_covariance(&rows_to_matrix(&trows, d), &rows_to_matrix(&prows, d));
    let lh = lambda_hat(&h, &v, &c, rect.len(), unlabeled.len())?;
    let fin = tuned_ppi_objective_from(model, &rect, unlabeled, &preds, lh.lambda)?;
    Ok(TunedPpiFit {
        theta: solve_with(&fin, solver)?.theta,
        estimate: TuningEstimate {
            lambda_hat: lh.lambda,
            raw: lh.raw,
            clipped: lh.clipped,
            degenerate: lh.degenerate,
            hessian_hat: h,
            var_fbar_hat: v,
            crosscov_hat: c,
            r: rect.len() as f64 / unlabeled.len() as f64,
        },
    })
}
