//! Trainable predictors `f(·)` used to pseudo-label inputs, plus the K-fold
//! and bootstrap training protocols.

mod forest;
mod mlp;
mod simple;

pub use forest::{Forest, ForestParams};
pub use mlp::{
    one_hot, Activation, Adam, Mlp, MlpCache, MlpLabeler, MlpParams, Net, Standardizer, PROB_FLOOR,
};
pub use simple::{argmax, ConstantMean, Knn, Ridge};

use std::fmt::Debug;
use std::sync::Arc;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::datasets::{FoldAssignment, Label, LabeledDataset};
use crate::error::{invalid, Result};
use crate::rng::{child_seed, derive_seed, rng_from_seed};

/// A fitted model.
pub trait Predictor: Send + Sync + Debug {
    fn predict(&self, x: &[f64]) -> Label;

    fn predict_batch(&self, inputs: &[Vec<f64>]) -> Vec<Label> {
        inputs.iter().map(|x| self.predict(x)).collect()
    }

    /// Set when fitting degenerated to a constant predictor.
    fn is_fallback(&self) -> bool {
        false
    }
}

/// Shareable handle to a fitted predictor.
#[derive(Debug, Clone)]
pub struct Labeler(Arc<dyn Predictor>);

impl Labeler {
    pub fn new(p: impl Predictor + 'static) -> Self {
        Self(Arc::new(p))
    }

    pub fn predict(&self, x: &[f64]) -> Label {
        self.0.predict(x)
    }

    pub fn predict_all(&self, inputs: &[Vec<f64>]) -> Vec<Label> {
        self.0.predict_batch(inputs)
    }

    pub fn is_fallback(&self) -> bool {
        self.0.is_fallback()
    }
}

/// Anything that can fit a labeler on a subset of a labeled dataset.
pub trait Trainer: Sync {
    fn fit_subset(&self, data: &LabeledDataset, indices: &[usize], seed: u64) -> Result<Labeler>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelerKind {
    ConstantMean,
    Ridge { strength: f64 },
    Knn { k: usize },
    ForestLite(ForestParams),
    Mlp(MlpParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelerSpec {
    pub kind: LabelerKind,
    #[serde(default)]
    pub seed: u64,
}

impl LabelerSpec {
    pub fn new(kind: LabelerKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn forest() -> Self {
        Self::new(LabelerKind::ForestLite(ForestParams::default()), 0)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            LabelerKind::ConstantMean => Ok(()),
            LabelerKind::Ridge { strength } if *strength >= 0.0 => Ok(()),
            LabelerKind::Ridge { .. } => invalid("ridge strength must be nonnegative"),
            LabelerKind::Knn { k } if *k >= 1 => Ok(()),
            LabelerKind::Knn { .. } => invalid("k must be positive"),
            LabelerKind::ForestLite(p) => p.validate(),
            LabelerKind::Mlp(p) => p.validate(),
        }
    }
}

/// Fit a labeler on the whole dataset.
pub fn fit(spec: &LabelerSpec, data: &LabeledDataset) -> Result<Labeler> {
    let all: Vec<usize> = (0..data.len()).collect();
    spec.fit_subset(data, &all, spec.seed)
}

impl Trainer for LabelerSpec {
    fn fit_subset(&self, data: &LabeledDataset, indices: &[usize], seed: u64) -> Result<Labeler> {
        self.validate()?;
        if indices.is_empty() {
            return invalid("cannot fit a labeler on zero points");
        }
        let sub = data.subset(indices);
        Ok(match &self.kind {
            LabelerKind::ConstantMean => Labeler::new(ConstantMean::fit(&sub)?),
            LabelerKind::Ridge { strength } => Labeler::new(Ridge::fit(&sub, *strength)?),
            LabelerKind::Knn { k } => Knn::fit(&sub, *k)?,
            LabelerKind::ForestLite(p) => Forest::fit(&sub, p, seed)?,
            LabelerKind::Mlp(p) => Labeler::new(MlpLabeler::fit(&sub, p, seed)?),
        })
    }
}

/// Model `k` is fitted on every labeled point outside fold `k`.
pub fn train_fold_models(
    data: &LabeledDataset,
    folds: &FoldAssignment,
    trainer: &dyn Trainer,
    seed: u64,
) -> Result<Vec<Labeler>> {
    if folds.n() != data.len() {
        return invalid("fold assignment does not match dataset size");
    }
    if folds.k() < 2 {
        return invalid("need at least two folds");
    }
    (0..folds.k())
        .map(|k| trainer.fit_subset(data, &folds.complement(k), child_seed(seed, k as u64)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct BootstrapModel {
    pub labeler: Labeler,
    /// Training indices `I_b`, sorted.
    pub indices: Vec<usize>,
}

impl BootstrapModel {
    /// Indices not used for training, ascending.
    pub fn held_out(&self, n: usize) -> Vec<usize> {
        let mut mask = vec![true; n];
        for &i in &self.indices {
            mask[i] = false;
        }
        (0..n).filter(|&i| mask[i]).collect()
    }
}

/// `runs` models, each fitted on `n − ⌊n/K⌋` indices drawn without replacement.
pub fn bootstrap_models(
    data: &LabeledDataset,
    k: usize,
    runs: usize,
    trainer: &dyn Trainer,
    seed: u64,
) -> Result<Vec<BootstrapModel>> {
    if runs < 2 {
        return invalid("need at least two bootstrap runs");
    }
    if k < 1 {
        return invalid("K must be positive");
    }
    let n = data.len();
    let size = n - n / k;
    if size == 0 {
        return invalid("bootstrap subsample would be empty");
    }
    (0..runs)
        .map(|b| {
            let s = derive_seed(seed, &["bootstrap".into(), b.into()]);
            let mut rng = rng_from_seed(s);
            let mut indices = sample(&mut rng, n, size).into_vec();
            indices.sort_unstable();
            let labeler = trainer.fit_subset(data, &indices, child_seed(s, 1))?;
            Ok(BootstrapModel { labeler, indices })
        })
        .collect()
}

/// Labels averaged across several labelers at one input.
pub fn average_prediction(models: &[&Labeler], x: &[f64], classes: Option<usize>) -> Result<Label> {
    let preds: Vec<Label> = models.iter().map(|m| m.predict(x)).collect();
    Label::average(&preds, classes)
}


#[cfg(test)]
mod tests {
    use super::testing::Recording;
    use super::*;
    use crate::datasets::make_folds;

    fn const_spec() -> LabelerSpec {
        LabelerSpec::new(LabelerKind::ConstantMean, 0)
    }

    fn line(n: usize) -> LabeledDataset {
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let y = (0..n).map(|i| (i * i) as f64 * 0.1).collect();
        LabeledDataset::scalar(x, y).unwrap()
    }

    #[test]
    fn two_point_fold_models_see_the_other_point() {
        let data = LabeledDataset::scalar(vec![vec![0.0], vec![1.0]], vec![1.0, 3.0]).unwrap();
        let folds = FoldAssignment::from_members(2, vec![vec![0], vec![1]]).unwrap();
        let models = train_fold_models(&data, &folds, &const_spec(), 0).unwrap();
        assert_eq!(models[0].predict(&[0.0]), Label::Scalar(3.0));
        assert_eq!(models[1].predict(&[0.0]), Label::Scalar(1.0));
    }

    #[test]
    fn fold_models_never_touch_their_fold() {
        let data = line(300);
        let folds = make_folds(300, 5, 11).unwrap();
        let rec = Recording::new(LabelerSpec::forest());
        let models = train_fold_models(&data, &folds, &rec, 1).unwrap();
        assert_eq!(models.len(), 5);
        let seen = rec.seen.lock().unwrap();
        for (k, idx) in seen.iter().enumerate() {
            assert_eq!(idx.len(), 240);
            assert!(idx.iter().all(|&i| folds.fold_of(i) != k));
        }
    }

    #[test]
    fn bootstrap_subsample_sizes_and_disjointness() {
        let data = line(10);
        let rec = Recording::new(const_spec());
        let boot = bootstrap_models(&data, 5, 6, &rec, 3).unwrap();
        for (b, m) in boot.iter().enumerate() {
            assert_eq!(m.indices.len(), 8);
            let held = m.held_out(10);
            assert_eq!(held.len(), 2);
            assert!(held.iter().all(|i| !m.indices.contains(i)));
            assert_eq!(rec.seen.lock().unwrap()[b], m.indices);
        }
        assert!(bootstrap_models(&data, 5, 1, &const_spec(), 3).is_err());
    }

    #[test]
    fn bootstrap_constant_means_match_subsample_distribution() {
        // Mean of a subsample of size s without replacement has expectation
        // ȳ and variance σ²/s · (n − s)/(n − 1), with σ² the 1/n variance.
        let n = 40;
        let data = line(n);
        let y = data.scalar_labels().unwrap();
        let ybar = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - ybar).powi(2)).sum::<f64>() / n as f64;
        let s = (n - n / 4) as f64;
        let sd_mean = (var / s * (n as f64 - s) / (n as f64 - 1.0)).sqrt();
        let runs = 2000;
        let boot = bootstrap_models(&data, 4, runs, &const_spec(), 9).unwrap();
        let avg: f64 = boot
            .iter()
            .map(|m| m.labeler.predict(&[0.0]).as_scalar().unwrap())
            .sum::<f64>()
            / runs as f64;
        assert!((avg - ybar).abs() < 4.0 * sd_mean / (runs as f64).sqrt());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = LabelerSpec::new(LabelerKind::Knn { k: 3 }, 7);
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<LabelerSpec>(&s).unwrap(), spec);
        let f: LabelerSpec = serde_json::from_str(r#"{"kind":{"kind":"forest_lite"}}"#).unwrap();
        assert_eq!(f.kind, LabelerKind::ForestLite(ForestParams::default()));
    }

    #[test]
    fn fitting_is_deterministic() {
        let data = line(50);
        for spec in [
            LabelerSpec::forest(),
            LabelerSpec::new(
                LabelerKind::Mlp(MlpParams {
                    epochs: 5,
                    ..MlpParams::default()
                }),
                4,
            ),
        ] {
            let a = fit(&spec, &data).unwrap();
            let b = fit(&spec, &data).unwrap();
            for i in 0..20 {
                let x = [i as f64 * 2.7 - 3.0];
                assert_eq!(a.predict(&x), b.predict(&x));
            }
        }
    }
}
