//! Data containers, fold partitioning and data generators.

mod folds;
mod rssi;
mod synth;

pub use folds::{make_folds, FoldAssignment};
pub use rssi::{
    gen_synthetic_rssi, load_rssi_csv, rssi_features, write_rssi_csv, Area, PathLossModel,
    RssiRecord, RssiTable, SyntheticRssi, DEFAULT_RSSI_FLOOR_DBM, MIN_AP_DISTANCE_M,
    RSSI_NOT_DETECTED,
};
pub use synth::{gen_synthetic, SynthParams};

use crate::error::{invalid, Result};

/// A label: real scalar, real vector, class index, or class distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    Scalar(f64),
    Vector(Vec<f64>),
    Class(usize),
    /// Soft class label (probabilities over classes, summing to one).
    Probs(Vec<f64>),
}

impl Label {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Label::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Label::Scalar(_) => "scalar",
            Label::Vector(_) => "vector",
            Label::Class(_) => "class",
            Label::Probs(_) => "probs",
        }
    }

    /// Class distribution view; a hard class becomes a one-hot vector.
    pub fn class_weights(&self, classes: usize) -> Option<Vec<f64>> {
        match self {
            Label::Class(c) if *c < classes => {
                let mut v = vec![0.0; classes];
                v[*c] = 1.0;
                Some(v)
            }
            Label::Probs(p) if p.len() == classes => Some(p.clone()),
            _ => None,
        }
    }

    /// Average of several predictions of the same kind.
    ///
    /// Scalars and vectors average coordinate-wise; class indices (and class
    /// distributions) average as one-hot vectors into a `Probs` label.
    pub fn average(labels: &[Label], classes: Option<usize>) -> Result<Label> {
        let Some(first) = labels.first() else {
            return invalid("cannot average zero labels");
        };
        let m = labels.len() as f64;
        match first {
            Label::Scalar(_) => {
                let mut acc = 0.0;
                for l in labels {
                    match l {
                        Label::Scalar(v) => acc += v,
                        _ => return invalid("mixed label kinds"),
                    }
                }
                Ok(Label::Scalar(acc / m))
            }
            Label::Vector(v0) => {
                let mut acc = vec![0.0; v0.len()];
                for l in labels {
                    match l {
                        Label::Vector(v) if v.len() == acc.len() => {
                            acc.iter_mut().zip(v).for_each(|(a, b)| *a += b)
                        }
                        _ => return invalid("mixed label kinds or lengths"),
                    }
                }
                Ok(Label::Vector(acc.into_iter().map(|a| a / m).collect()))
            }
            Label::Class(_) | Label::Probs(_) => {
                let j = match (classes, first) {
                    (Some(j), _) => j,
                    (None, Label::Probs(p)) => p.len(),
                    (None, _) => return invalid("class count required to average class labels"),
                };
                let mut acc = vec![0.0; j];
                for l in labels {
                    let w = l
                        .class_weights(j)
                        .ok_or_else(|| crate::Error::InvalidArgument("bad class label".into()))?;
                    acc.iter_mut().zip(&w).for_each(|(a, b)| *a += b);
                }
                Ok(Label::Probs(acc.into_iter().map(|a| a / m).collect()))
            }
        }
    }
}

fn check_inputs(inputs: &[Vec<f64>]) -> Result<usize> {
    let dim = inputs.first().map_or(0, Vec::len);
    if let Some(i) = inputs.iter().position(|x| x.len() != dim) {
        return invalid(format!(
            "input {i} has dimension {} (expected {dim})",
            inputs[i].len()
        ));
    }
    Ok(dim)
}

/// Labeled pairs `{(X_i, Y_i)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    inputs: Vec<Vec<f64>>,
    labels: Vec<Label>,
    classes: Option<usize>,
}

impl LabeledDataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return invalid(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            ));
        }
        check_inputs(&inputs)?;
        if let Some(first) = labels.first() {
            let same_kind = labels.iter().all(|l| {
                std::mem::discriminant(l) == std::mem::discriminant(first)
                    && match (l, first) {
                        (Label::Vector(a), Label::Vector(b))
                        | (Label::Probs(a), Label::Probs(b)) => a.len() == b.len(),
                        _ => true,
                    }
            });
            if !same_kind {
                return invalid("labels must share one kind and length");
            }
        }
        Ok(Self {
            inputs,
            labels,
            classes: None,
        })
    }

    /// Classification dataset; every label must be a class index `< classes`.
    pub fn with_classes(inputs: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&c| c >= classes) {
            return invalid(format!("class label {bad} >= class count {classes}"));
        }
        let mut ds = Self::new(inputs, labels.into_iter().map(Label::Class).collect())?;
        ds.classes = Some(classes);
        Ok(ds)
    }

    pub fn scalar(inputs: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        Self::new(inputs, labels.into_iter().map(Label::Scalar).collect())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn classes(&self) -> Option<usize> {
        self.classes
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i]
    }

    pub fn label(&self, i: usize) -> &Label {
        &self.labels[i]
    }

    pub fn scalar_labels(&self) -> Option<Vec<f64>> {
        self.labels.iter().map(Label::as_scalar).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
            classes: self.classes,
        }
    }

    /// Drop the labels.
    pub fn to_unlabeled(&self) -> Result<UnlabeledDataset> {
        UnlabeledDataset::new(self.inputs.clone())
    }
}

/// Unlabeled inputs `{X̃_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledDataset {
    inputs: Vec<Vec<f64>>,
}

impl UnlabeledDataset {
    pub fn new(inputs: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.is_empty() {
            return invalid("unlabeled dataset must be non-empty");
        }
        check_inputs(&inputs)?;
        Ok(Self { inputs })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i]
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.inputs[i].clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mismatched_lengths_rejected() {
        assert!(LabeledDataset::scalar(vec![vec![1.0]], vec![]).is_err());
        assert!(LabeledDataset::scalar(vec![vec![1.0], vec![1.0, 2.0]], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn class_labels_bounded() {
        assert!(LabeledDataset::with_classes(vec![vec![0.0]], vec![3], 3).is_err());
        assert!(LabeledDataset::with_classes(vec![vec![0.0]], vec![2], 3).is_ok());
    }

    #[test]
    fn unlabeled_must_be_non_empty() {
        assert!(UnlabeledDataset::new(vec![]).is_err());
    }

    #[test]
    fn class_average_is_a_distribution() {
        let avg = Label::average(
            &[Label::Class(0), Label::Class(2), Label::Class(2)],
            Some(3),
        )
        .unwrap();
        match avg {
            Label::Probs(p) => {
                assert!((p[0] - 1.0 / 3.0).abs() < 1e-15);
                assert!((p[2] - 2.0 / 3.0).abs() < 1e-15);
            }
            _ => panic!("expected probs"),
        }
        assert_eq!(
            Label::average(&[Label::Scalar(1.0), Label::Scalar(3.0)], None).unwrap(),
            Label::Scalar(2.0)
        );
    }
}
