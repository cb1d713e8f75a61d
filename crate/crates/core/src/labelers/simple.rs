use nalgebra::{DMatrix, DVector};

use super::{Labeler, Predictor};
use crate::datasets::{Label, LabeledDataset};
use crate::error::{invalid, Result};
use crate::linalg::solve_psd;

/// Predicts the training label mean (majority class for class labels).
#[derive(Debug, Clone)]
pub struct ConstantMean {
    value: Label,
    fallback: bool,
}

impl ConstantMean {
    pub fn fit(data: &LabeledDataset) -> Result<Self> {
        if data.is_empty() {
            return invalid("empty dataset");
        }
        let value = match data.classes() {
            Some(j) => {
                let avg = Label::average(data.labels(), Some(j))?;
                let Label::Probs(p) = avg else { unreachable!() };
                Label::Class(argmax(&p))
            }
            None => Label::average(data.labels(), None)?,
        };
        Ok(Self {
            value,
            fallback: false,
        })
    }

    pub(crate) fn into_fallback(mut self) -> Self {
        self.fallback = true;
        self
    }

    pub fn value(&self) -> &Label {
        &self.value
    }
}

impl Predictor for ConstantMean {
    fn predict(&self, _x: &[f64]) -> Label {
        self.value.clone()
    }

    fn is_fallback(&self) -> bool {
        self.fallback
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Labels as rows of reals: scalars have one column, class labels are one-hot.
pub(crate) fn target_rows(data: &LabeledDataset) -> Result<(Vec<Vec<f64>>, usize)> {
    let mut rows = Vec::with_capacity(data.len());
    for l in data.labels() {
        rows.push(match (l, data.classes()) {
            (Label::Scalar(v), _) => vec![*v],
            (Label::Vector(v), _) => v.clone(),
            (l, Some(j)) => l.class_weights(j).expect("validated class label"),
            (l, None) => return invalid(format!("unsupported label kind {}", l.kind_name())),
        });
    }
    let w = rows.first().map_or(0, Vec::len);
    Ok((rows, w))
}

/// Turn an averaged target row back into a label of the training kind.
pub(crate) fn row_to_label(row: Vec<f64>, template: &Label) -> Label {
    match template {
        Label::Scalar(_) => Label::Scalar(row[0]),
        Label::Vector(_) => Label::Vector(row),
        Label::Class(_) | Label::Probs(_) => Label::Class(argmax(&row)),
    }
}

pub(crate) fn all_inputs_identical(data: &LabeledDataset) -> bool {
    let x0 = data.input(0);
    data.inputs().iter().all(|x| x == x0)
}

/// Linear ridge regression with an unpenalized intercept.
#[derive(Debug, Clone)]
pub struct Ridge {
    coef: DMatrix<f64>,
    intercept: DVector<f64>,
    template: Label,
}

impl Ridge {
    pub fn fit(data: &LabeledDataset, strength: f64) -> Result<Self> {
        if data.is_empty() {
            return invalid("empty dataset");
        }
        if data.classes().is_some() {
            return invalid("ridge labeler needs real-valued labels");
        }
        let (rows, w) = target_rows(data)?;
        let n = data.len();
        let d = data.dim();
        let xm = DVector::from_fn(d, |j, _| {
            data.inputs().iter().map(|x| x[j]).sum::<f64>() / n as f64
        });
        let ym = DVector::from_fn(w, |j, _| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64);
        let xc = DMatrix::from_fn(n, d, |i, j| data.input(i)[j] - xm[j]);
        let yc = DMatrix::from_fn(n, w, |i, j| rows[i][j] - ym[j]);
        let gram = xc.transpose() * &xc + DMatrix::identity(d, d) * strength;
        let rhs = xc.transpose() * yc;
        let mut coef = DMatrix::zeros(d, w);
        for j in 0..w {
            let (c, _) = solve_psd(&gram, &rhs.column(j).into_owned(), 1e-8)?;
            coef.set_column(j, &c);
        }
        let intercept = ym - coef.transpose() * xm;
        Ok(Self {
            coef,
            intercept,
            template: data.label(0).clone(),
        })
    }
}

impl Predictor for Ridge {
    fn predict(&self, x: &[f64]) -> Label {
        let xv = DVector::from_column_slice(x);
        let out = self.coef.transpose() * xv + &self.intercept;
        row_to_label(out.iter().copied().collect(), &self.template)
    }
}

/// k-nearest-neighbour averaging (majority vote for classes).
#[derive(Debug, Clone)]
pub struct Knn {
    k: usize,
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    template: Label,
}

impl Knn {
    pub fn fit(data: &LabeledDataset, k: usize) -> Result<Labeler> {
        if data.is_empty() {
            return invalid("empty dataset");
        }
        if all_inputs_identical(data) {
            return Ok(Labeler::new(ConstantMean::fit(data)?.into_fallback()));
        }
        let (targets, _) = target_rows(data)?;
        Ok(Labeler::new(Self {
            k: k.min(data.len()),
            inputs: data.inputs().to_vec(),
            targets,
            template: data.label(0).clone(),
        }))
    }
}

impl Predictor for Knn {
    fn predict(&self, x: &[f64]) -> Label {
        let mut d: Vec<(f64, usize)> = self
            .inputs
            .iter()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        // (distance, index) ordering breaks distance ties by lower index
        d.select_nth_unstable_by(self.k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let w = self.targets[0].len();
        let mut acc = vec![0.0; w];
        for &(_, i) in &d[..self.k] {
            acc.iter_mut()
                .zip(&self.targets[i])
                .for_each(|(a, t)| *a += t);
        }
        acc.iter_mut().for_each(|a| *a /= self.k as f64);
        row_to_label(acc, &self.template)
    }
}
