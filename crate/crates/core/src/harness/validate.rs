//! Quick invariant suite run by `crossppi validate`.

use nalgebra::DMatrix;
use rand::Rng as _;

use super::config::{ExperimentConfig, ExperimentKind, SchemeName};
use super::output::{mean_stderr, parse_csv, ResultsRow, ResultsTable};
use super::{run_experiment, synth_trial};
use crate::datasets::{gen_synthetic, make_folds, Label, LabeledDataset, SynthParams};
use crate::error::Result;
use crate::estimators::{erm_objective, tuned_cppi_objective_from};
use crate::labelers::LabelerSpec;
use crate::losses::{
    fit_elm_hidden, fit_rbf_nystrom, FeatureMap, LossModel, DEFAULT_NYSTROM_JITTER,
};
use crate::rng::rng_from_seed;
use crate::tuning::{cross_fit, lambda_hat_mean};
use crate::wireless::{
    beam_gain, channel_from_paths, gen_environment, kron, linear_response, make_upa_codebook,
    optimal_beam, ArrayGeometry, Codebook, Region, Upa, C64,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check {
            name,
            passed,
            detail,
        },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

fn fd_rel_err(model: &LossModel, theta: &[f64], x: &[f64], y: &Label) -> Result<f64> {
    let g = model.grad(theta, x, y)?;
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let scale = g.iter().fold(1e-8_f64, |m, v| m.max(v.abs()));
    for i in 0..theta.len() {
        let mut p = theta.to_vec();
        let mut m = theta.to_vec();
        p[i] += h;
        m[i] -= h;
        let fd = (model.value(&p, x, y)? - model.value(&m, x, y)?) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / scale);
    }
    Ok(worst)
}

fn loss_gradients() -> Result<(bool, String)> {
    let mut rng = rng_from_seed(1);
    let pts: Vec<Vec<f64>> = (0..30)
        .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let models = [
        ("mean", LossModel::mean_estimation(), Label::Scalar(0.7)),
        (
            "linreg",
            LossModel::linear_regression(3, FeatureMap::Identity)?,
            Label::Scalar(-0.3),
        ),
        (
            "softmax",
            LossModel::ridge_softmax(
                3,
                4,
                0.1,
                fit_rbf_nystrom(&pts, 6, None, DEFAULT_NYSTROM_JITTER, 2)?,
            )?,
            Label::Class(2),
        ),
        (
            "elm",
            LossModel::elm_ridge(3, 2, 0.1, fit_elm_hidden(&pts, 5, 3)?)?,
            Label::Vector(vec![0.5, -1.0]),
        ),
    ];
    let mut worst = 0.0_f64;
    let mut detail = Vec::new();
    for (name, m, y) in &models {
        let theta: Vec<f64> = (0..m.dim_theta())
            .map(|_| rng.random_range(-0.5..0.5))
            .collect();
        let e = fd_rel_err(m, &theta, &pts[0], y)?;
        worst = worst.max(e);
        detail.push(format!("{name} {e:.1e}"));
    }
    Ok((worst < 1e-5, detail.join(", ")))
}

fn endpoint_objectives() -> Result<(bool, String)> {
    let p = SynthParams {
        d: 2,
        mu: 1.0,
        sigma: 1.0,
        r: 0.8,
        seed: 4,
    };
    let (lab, unl) = gen_synthetic(&p, 40, 200)?;
    let model = LossModel::linear_regression(2, FeatureMap::Identity)?;
    let spec = LabelerSpec::new(crate::labelers::LabelerKind::Ridge { strength: 0.1 }, 0);
    let (_, _, preds) = cross_fit(&lab, &unl, 4, &spec, 5)?;
    let erm = erm_objective(&model, &lab)?;
    let cppi0 = tuned_cppi_objective_from(&model, &lab, &unl, &preds, 0.0)?;
    let half = tuned_cppi_objective_from(&model, &lab, &unl, &preds, 0.5)?;
    let one = tuned_cppi_objective_from(&model, &lab, &unl, &preds, 1.0)?;
    let theta = [0.3, -0.2];
    let d0 = rel(erm.value(&theta), cppi0.value(&theta));
    // The objective is affine in λ.
    let mid = 0.5 * (cppi0.value(&theta) + one.value(&theta));
    let d1 = rel(half.value(&theta), mid);
    Ok((
        d0 <= 1e-12 && d1 <= 1e-12,
        format!("λ=0 vs ERM {d0:.1e}, affine in λ {d1:.1e}"),
    ))
}

fn folds_partition() -> Result<(bool, String)> {
    let f = make_folds(103, 5, 9)?;
    let mut seen = vec![0usize; 103];
    for k in 0..5 {
        for &i in f.members(k) {
            seen[i] += 1;
        }
    }
    let sizes: Vec<usize> = (0..5).map(|k| f.members(k).len()).collect();
    let balanced = sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1;
    Ok((
        seen.iter().all(|&c| c == 1) && balanced,
        format!("fold sizes {sizes:?}"),
    ))
}

fn lambda_degenerate() -> Result<(bool, String)> {
    let mut rng = rng_from_seed(6);
    let y: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
    let constant = vec![0.25; 200];
    let l = lambda_hat_mean(&y, &constant, 0.01)?;
    let informative: Vec<f64> = y
        .iter()
        .map(|v| v + 0.1 * rng.random_range(-1.0..1.0))
        .collect();
    let good = lambda_hat_mean(&y, &informative, 0.01)?;
    Ok((
        l.lambda == 0.0 && l.degenerate && good.lambda > 0.8 && good.lambda <= 1.0,
        format!(
            "constant labeler λ̂ {}, informative λ̂ {:.3}",
            l.lambda, good.lambda
        ),
    ))
}

fn kronecker_structure() -> Result<(bool, String)> {
    let upa = Upa::new(4, 3, 0.5)?;
    let (u, v) = (0.31, -0.42);
    let a = upa.response_uv(u, v);
    let b = kron(&linear_response(4, 0.5, u), &linear_response(3, 0.5, v));
    let diff = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max);
    let cb = make_upa_codebook(4, 3, 0.5)?;
    let norms = cb
        .beams()
        .iter()
        .map(|w| (w.iter().map(|c| c.norm_sqr()).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok((
        diff < 1e-12 && norms < 1e-12 && cb.len() == 8 * 6,
        format!(
            "kron diff {diff:.1e}, unit-norm dev {norms:.1e}, {} beams",
            cb.len()
        ),
    ))
}

fn argmax_scale_invariance() -> Result<(bool, String)> {
    let env = gen_environment(Region::default(), 8, 3, 11)?;
    let geom = ArrayGeometry::tx_only(4, 4, 0.5)?;
    let tx = make_upa_codebook(4, 4, 0.5)?;
    let rx = Codebook::trivial();
    let mut same = 0;
    let pos = env.sample_positions(20, 12);
    for x in &pos {
        let h = channel_from_paths(&env.paths(x)?, &geom)?;
        let scaled: DMatrix<C64> = h.map(|c| c * C64::from_polar(3.7, 1.1));
        let j = optimal_beam(&h, &tx, &rx)?;
        let best = tx
            .beams()
            .iter()
            .map(|u| beam_gain(&h, u, rx.beam(0)))
            .fold(0.0, f64::max);
        if j == optimal_beam(&scaled, &tx, &rx)?
            && (beam_gain(&h, tx.beam(j), rx.beam(0)) - best).abs() <= 1e-12 * best
        {
            same += 1;
        }
    }
    Ok((same == pos.len(), format!("{same}/{} positions", pos.len())))
}

fn stderr_and_csv() -> Result<(bool, String)> {
    let values = vec![0.1, 0.4, 0.35, 0.2, 0.9];
    let row = ResultsRow::from_values("synth-mean", "ERM", 100.0, "mse", values.clone());
    let (m, se) = mean_stderr(&values);
    let n = values.len() as f64;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    let se_ok = (row.stderr - (var / n).sqrt()).abs() <= 1e-12 && row.stderr == se;
    let table = ResultsTable { rows: vec![row] };
    let back = parse_csv(&table.to_csv_string())?;
    let round = back.to_csv_string() == table.to_csv_string();
    Ok((
        se_ok && round,
        format!("stderr ok {se_ok}, csv round trip {round}"),
    ))
}

fn determinism() -> Result<(bool, String)> {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::SynthMean);
    cfg.trials = 3;
    cfg.schemes = vec![SchemeName::Erm, SchemeName::Cppi];
    cfg.labeler.trees = 5;
    let a = run_experiment(&cfg)?.to_csv_string();
    let b = run_experiment(&cfg)?.to_csv_string();
    // Trial seeds do not depend on the trial count.
    let s = super::trial_seed(cfg.seed, cfg.experiment, 100.0, 1);
    let t1 = synth_trial(&cfg, s)?;
    let mut more = cfg.clone();
    more.trials = 7;
    let t2 = synth_trial(&more, s)?;
    let same_trial = t1.labeled.labels() == t2.labeled.labels();
    Ok((
        a == b && same_trial,
        format!("identical csv {}, stable trial data {same_trial}", a == b),
    ))
}

fn check_dataset() -> Result<(bool, String)> {
    let d = LabeledDataset::with_classes(vec![vec![0.0], vec![1.0]], vec![0, 2], 3)?;
    let rejected = LabeledDataset::with_classes(vec![vec![0.0]], vec![3], 3).is_err();
    Ok((
        d.classes() == Some(3) && rejected,
        "class range enforced".into(),
    ))
}

/// Run every check; all must pass on a clean build.
pub fn run_invariant_suite() -> Vec<Check> {
    vec![
        check("loss gradients match finite differences", loss_gradients),
        check("tuned CPPI objective endpoints", endpoint_objectives),
        check("folds partition the labeled set", folds_partition),
        check("λ̂ of a constant labeler is zero", lambda_degenerate),
        check("UPA responses are Kronecker products", kronecker_structure),
        check("beam argmax is scale invariant", argmax_scale_invariance),
        check("standard errors and CSV round trip", stderr_and_csv),
        check("experiments are deterministic", determinism),
        check("class labels are range checked", check_dataset),
    ]
}
