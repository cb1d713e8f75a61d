use std::sync::Arc;

use nalgebra::DMatrix;

use super::config::{ExperimentConfig, SchemeName};
use super::mest::MEstContext;
use super::{test_count, Metrics, SchemeResult};
use crate::datasets::{make_folds, Label, LabeledDataset, UnlabeledDataset};
use crate::error::{invalid, Result};
use crate::labelers::argmax;
use crate::losses::{fit_rbf_nystrom, median_heuristic, LossModel, DEFAULT_NYSTROM_JITTER};
use crate::meta::{
    fixed_cppi_train, mcppi_train, mpl_train, BatchLossConfig, FixedPseudoLabels, MetaRun,
};
use crate::rng::derive_seed;
use crate::tuning::cross_fit;
use crate::wireless::{
    beam_dataset, capacity, channel_from_paths, gen_environment, make_upa_codebook, pair,
    ArrayGeometry, CkmParams, CkmTrainer, Codebook, Environment, C64,
};

/// One seeded environment with labeled, unlabeled and test positions, all
/// labeled with their optimal beam over the full codebook.
#[derive(Debug, Clone)]
pub struct BeamTrial {
    pub env: Arc<Environment>,
    pub geom: ArrayGeometry,
    pub tx: Arc<Codebook>,
    pub rx: Arc<Codebook>,
    pub labeled: LabeledDataset,
    pub unlabeled: UnlabeledDataset,
    pub test: LabeledDataset,
    test_channels: Vec<DMatrix<C64>>,
    power: f64,
    noise_var: f64,
    ckm: CkmParams,
}

pub fn beam_trial(cfg: &ExperimentConfig, seed: u64) -> Result<BeamTrial> {
    let b = &cfg.beam;
    let env = gen_environment(
        b.region,
        b.scatterers,
        b.l_max,
        derive_seed(seed, &["env".into()]),
    )?;
    let geom = ArrayGeometry::tx_only(b.ny, b.nz, b.spacing)?;
    let tx = make_upa_codebook(b.ny, b.nz, b.spacing)?;
    let rx = Codebook::trivial();
    let n_test = test_count(cfg.n + cfg.big_n, b.test_fraction);
    let total = cfg.n + cfg.big_n + n_test;
    let positions = env.sample_positions(total, derive_seed(seed, &["positions".into()]));
    let all = beam_dataset(&env, &geom, &tx, &rx, &positions)?;
    let labeled = all.subset(&(0..cfg.n).collect::<Vec<_>>());
    let unlabeled = all
        .subset(&(cfg.n..cfg.n + cfg.big_n).collect::<Vec<_>>())
        .to_unlabeled()?;
    let test = all.subset(&(cfg.n + cfg.big_n..total).collect::<Vec<_>>());
    let test_channels = test
        .inputs()
        .iter()
        .map(|x| channel_from_paths(&env.paths(x)?, &geom))
        .collect::<Result<Vec<_>>>()?;
    let mut ckm = CkmParams {
        slots: b.ckm_slots,
        ..CkmParams::default()
    };
    ckm.mlp.hidden = b.ckm_hidden.clone();
    ckm.mlp.epochs = b.ckm_epochs;
    ckm.mlp.learning_rate = b.ckm_learning_rate;
    Ok(BeamTrial {
        env: Arc::new(env),
        geom,
        tx: Arc::new(tx),
        rx: Arc::new(rx),
        labeled,
        unlabeled,
        test,
        test_channels,
        power: b.power,
        noise_var: b.noise_var,
        ckm,
    })
}

impl BeamTrial {
    /// CKM labeler trainer selecting beams from `tx`.
    pub fn trainer(&self, tx: Arc<Codebook>) -> CkmTrainer {
        CkmTrainer {
            env: self.env.clone(),
            geom: self.geom,
            tx,
            rx: self.rx.clone(),
            params: self.ckm.clone(),
        }
    }

    fn class_of(y: &Label) -> Result<usize> {
        match y {
            Label::Class(c) => Ok(*c),
            _ => invalid("beam labels are classes"),
        }
    }

    /// Mean test capacity and accuracy of a beam-pair predictor.
    pub fn evaluate(&self, predict: impl Fn(&[f64]) -> Result<usize>) -> Result<(f64, f64)> {
        self.evaluate_indexed(|_, x| predict(x))
    }

    fn evaluate_indexed(
        &self,
        predict: impl Fn(usize, &[f64]) -> Result<usize>,
    ) -> Result<(f64, f64)> {
        let mut cap = 0.0;
        let mut hits = 0usize;
        for (i, (y, h)) in self
            .test
            .labels()
            .iter()
            .zip(&self.test_channels)
            .enumerate()
        {
            let j = predict(i, self.test.input(i))?;
            let (u, w) = pair(&self.tx, &self.rx, j)?;
            cap += capacity(h, u, w, self.power, self.noise_var)?;
            hits += usize::from(j == Self::class_of(y)?);
        }
        let m = self.test.len() as f64;
        Ok((cap / m, hits as f64 / m))
    }

    /// Upper reference: the optimal beam of the true channel.
    pub fn perfect_csi(&self) -> Result<(f64, f64)> {
        self.evaluate_indexed(|i, _| Self::class_of(self.test.label(i)))
    }
}

fn metrics(cap_acc: (f64, f64), lambda: Option<f64>) -> Metrics {
    let mut m = vec![("capacity", cap_acc.0), ("accuracy", cap_acc.1)];
    if let Some(l) = lambda {
        m.push(("lambda", l));
    }
    m
}

fn perfect(trial: &BeamTrial) -> Result<Metrics> {
    Ok(metrics(trial.perfect_csi()?, None))
}

/// Softmax location model over the beams seen among the labels and the
/// pseudo-labels of the labelers the schemes use. Labelers then choose among
/// those beams only, so every label the estimators see is a valid class.
#[derive(Debug, Clone)]
pub struct SoftmaxSetup {
    pub trial: BeamTrial,
    /// Full-codebook index of each class.
    pub observed: Vec<usize>,
    /// Labeled positions with restricted class indices.
    pub labeled: LabeledDataset,
    pub model: LossModel,
    pub trainer: CkmTrainer,
}

impl SoftmaxSetup {
    pub fn context<'a>(&'a self, cfg: &'a ExperimentConfig, seed: u64) -> MEstContext<'a> {
        MEstContext::new(
            &self.model,
            &self.labeled,
            &self.trial.unlabeled,
            &self.trainer,
            cfg,
            seed,
        )
    }

    /// Full-codebook beam chosen by the fitted softmax.
    pub fn predict(&self, theta: &[f64], x: &[f64]) -> Result<usize> {
        Ok(self.observed[argmax(&self.model.scores(theta, &self.model.features(x)?))])
    }
}

pub fn softmax_setup(cfg: &ExperimentConfig, seed: u64) -> Result<SoftmaxSetup> {
    let trial = beam_trial(cfg, seed)?;
    if trial.rx.len() != 1 {
        return invalid("class restriction assumes a single receive beam");
    }
    let full = trial.trainer(trial.tx.clone());
    let placeholder = LossModel::mean_estimation();
    let scout = MEstContext::new(
        &placeholder,
        &trial.labeled,
        &trial.unlabeled,
        &full,
        cfg,
        seed,
    );
    let mut seen = vec![false; trial.tx.len()];
    for y in trial
        .labeled
        .labels()
        .iter()
        .chain(&scout.predicted_labels(&cfg.schemes)?)
    {
        seen[BeamTrial::class_of(y)?] = true;
    }
    let mut observed: Vec<usize> = (0..seen.len()).filter(|&c| seen[c]).collect();
    if observed.len() < 2 {
        // A softmax needs two classes; pad with the lowest unseen beam.
        observed.push((0..seen.len()).find(|&c| !seen[c]).unwrap_or(0));
        observed.sort_unstable();
    }
    let mut index_of = vec![usize::MAX; trial.tx.len()];
    for (i, &c) in observed.iter().enumerate() {
        index_of[c] = i;
    }
    let restricted = Arc::new(Codebook::from_beams(
        observed
            .iter()
            .map(|&c| trial.tx.beam(c).to_vec())
            .collect(),
    )?);
    let trainer = trial.trainer(restricted);
    let labels: Vec<usize> = trial
        .labeled
        .labels()
        .iter()
        .map(|y| BeamTrial::class_of(y).map(|c| index_of[c]))
        .collect::<Result<_>>()?;
    let labeled =
        LabeledDataset::with_classes(trial.labeled.inputs().to_vec(), labels, observed.len())?;
    let mut pool = labeled.inputs().to_vec();
    pool.extend_from_slice(trial.unlabeled.inputs());
    let b = &cfg.beam;
    if !(b.bandwidth_scale > 0.0) {
        return invalid("bandwidth scale must be positive");
    }
    let fmap = fit_rbf_nystrom(
        &pool,
        b.landmarks.min(pool.len()),
        Some(b.bandwidth_scale * median_heuristic(&pool)),
        DEFAULT_NYSTROM_JITTER,
        derive_seed(seed, &["nystrom".into()]),
    )?;
    let model = LossModel::ridge_softmax(labeled.dim(), observed.len(), b.softmax_gamma, fmap)?;
    Ok(SoftmaxSetup {
        trial,
        observed,
        labeled,
        model,
        trainer,
    })
}

pub(super) fn run_softmax(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<SchemeResult>> {
    let setup = softmax_setup(cfg, seed)?;
    let ctx = setup.context(cfg, seed);
    let fit = |s: SchemeName| -> Result<Metrics> {
        let e = ctx.fit(s)?;
        Ok(metrics(
            setup.trial.evaluate(|x| setup.predict(&e.theta, x))?,
            e.lambda,
        ))
    };
    Ok(cfg
        .schemes
        .iter()
        .map(|&scheme| SchemeResult {
            scheme,
            outcome: match scheme {
                SchemeName::PerfectCsi => perfect(&setup.trial),
                s => fit(s),
            },
        })
        .collect())
}

fn meta_cfg(cfg: &ExperimentConfig, seed: u64) -> BatchLossConfig {
    BatchLossConfig {
        seed: derive_seed(seed, &["student".into()]),
        ..cfg.meta.clone()
    }
}

fn student_metrics(trial: &BeamTrial, run: &MetaRun, lambda: Option<f64>) -> Result<Metrics> {
    Ok(metrics(
        trial.evaluate(|x| Ok(run.student.predict(x)))?,
        lambda,
    ))
}

/// Network students on fixed cross-fit CKM pseudo-labels.
pub(super) fn run_nn(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<SchemeResult>> {
    let trial = beam_trial(cfg, seed)?;
    let trainer = trial.trainer(trial.tx.clone());
    let needs = cfg.schemes.iter().any(|s| *s != SchemeName::PerfectCsi);
    let fixed = if needs {
        let (folds, _, preds) = cross_fit(
            &trial.labeled,
            &trial.unlabeled,
            cfg.k,
            &trainer,
            derive_seed(seed, &["cppi".into()]),
        )?;
        let held_out = preds
            .held_out
            .iter()
            .map(BeamTrial::class_of)
            .collect::<Result<_>>()?;
        let unlabeled = (0..folds.k())
            .map(|k| {
                preds
                    .unlabeled
                    .iter()
                    .map(|row| BeamTrial::class_of(&row[k]))
                    .collect()
            })
            .collect::<Result<_>>()?;
        Some((
            folds,
            FixedPseudoLabels {
                held_out,
                unlabeled,
            },
        ))
    } else {
        None
    };
    let mcfg = meta_cfg(cfg, seed);
    let train = |lambda: Option<f64>, report: bool| -> Result<Metrics> {
        let (folds, pseudo) = fixed
            .as_ref()
            .expect("pseudo-labels computed for student schemes");
        let run = fixed_cppi_train(
            &trial.labeled,
            &trial.unlabeled,
            folds,
            pseudo,
            &mcfg,
            lambda,
        )?;
        student_metrics(&trial, &run, report.then_some(run.lambda))
    };
    Ok(cfg
        .schemes
        .iter()
        .map(|&scheme| SchemeResult {
            scheme,
            outcome: match scheme {
                SchemeName::PerfectCsi => perfect(&trial),
                SchemeName::Erm => train(Some(0.0), false),
                SchemeName::Cppi => train(Some(1.0), false),
                SchemeName::TunedCppi => train(cfg.lambda, true),
                s => invalid(format!("{} is not available for beam-align-nn", s.name())),
            },
        })
        .collect())
}

/// Jointly trained teachers (MPL, MCPPI) against fixed warmed-up teachers
/// (tuned CPPI batch) and a supervised-only student (λ = 0).
pub(super) fn run_meta(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<SchemeResult>> {
    let trial = beam_trial(cfg, seed)?;
    let folds = make_folds(
        trial.labeled.len(),
        cfg.k,
        derive_seed(seed, &["folds".into()]),
    )?;
    let base = meta_cfg(cfg, seed);
    let tuned = match cfg.lambda {
        Some(l) => BatchLossConfig {
            lambda: l,
            auto_lambda: false,
            ..base.clone()
        },
        None => base.clone(),
    };
    let supervised = BatchLossConfig {
        lambda: 0.0,
        auto_lambda: false,
        ..base.clone()
    };
    let (lab, unl) = (&trial.labeled, &trial.unlabeled);
    Ok(cfg
        .schemes
        .iter()
        .map(|&scheme| SchemeResult {
            scheme,
            outcome: match scheme {
                SchemeName::PerfectCsi => perfect(&trial),
                SchemeName::Erm => mcppi_train(lab, unl, &folds, &supervised, false)
                    .and_then(|r| student_metrics(&trial, &r, None)),
                SchemeName::Mpl => {
                    mpl_train(lab, unl, &base).and_then(|r| student_metrics(&trial, &r, None))
                }
                SchemeName::Mcppi => mcppi_train(lab, unl, &folds, &tuned, true)
                    .and_then(|r| student_metrics(&trial, &r, Some(r.lambda))),
                SchemeName::TunedCppiBatch => mcppi_train(lab, unl, &folds, &tuned, false)
                    .and_then(|r| student_metrics(&trial, &r, Some(r.lambda))),
                s => invalid(format!("{} is not available for mcppi-beam", s.name())),
            },
        })
        .collect())
}
