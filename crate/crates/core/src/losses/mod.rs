//! Convex per-sample losses `ℓ_θ(x, y)` with analytic gradients and Hessians.
//!
//! Every loss here depends on θ only through the scores `s = Θ ψ(x)`, where
//! θ is stored as `r` contiguous blocks of length `m` (block `j` is `θ_j`)
//! and `ψ` is the feature vector. Mean estimation is the special case
//! `ψ = [1]`, `r = 1`.

mod features;

pub use features::{
    elm_features, fit_elm_hidden, fit_rbf_nystrom, median_heuristic, nystrom_from_landmarks,
    rbf_kernel, ElmHidden, FeatureMap, Nystrom, DEFAULT_NYSTROM_JITTER,
};

use nalgebra::DMatrix;

use crate::datasets::Label;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    MeanEstimation,
    LinearRegression,
    RidgeSoftmax,
    ElmRidge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossModel {
    kind: LossKind,
    input_dim: usize,
    feature_map: FeatureMap,
    gamma: f64,
    /// Class count for softmax, output count for ELM, 1 otherwise.
    links: usize,
}

/// Second derivative of the data term with respect to the scores.
#[derive(Debug, Clone, PartialEq)]
pub enum Curvature {
    ScaledIdentity(f64),
    Full(DMatrix<f64>),
}

impl LossModel {
    pub fn mean_estimation() -> Self {
        Self {
            kind: LossKind::MeanEstimation,
            input_dim: 0,
            feature_map: FeatureMap::Identity,
            gamma: 0.0,
            links: 1,
        }
    }

    pub fn linear_regression(input_dim: usize, feature_map: FeatureMap) -> Result<Self> {
        feature_map.check_input(input_dim)?;
        Ok(Self {
            kind: LossKind::LinearRegression,
            input_dim,
            feature_map,
            gamma: 0.0,
            links: 1,
        })
    }

    pub fn ridge_softmax(
        input_dim: usize,
        classes: usize,
        gamma: f64,
        feature_map: FeatureMap,
    ) -> Result<Self> {
        if classes < 2 {
            return invalid("softmax needs at least two classes");
        }
        check_gamma(gamma)?;
        feature_map.check_input(input_dim)?;
        Ok(Self {
            kind: LossKind::RidgeSoftmax,
            input_dim,
            feature_map,
            gamma,
            links: classes,
        })
    }

    pub fn elm_ridge(
        input_dim: usize,
        outputs: usize,
        gamma: f64,
        feature_map: FeatureMap,
    ) -> Result<Self> {
        if outputs == 0 {
            return invalid("ELM needs at least one output");
        }
        check_gamma(gamma)?;
        feature_map.check_input(input_dim)?;
        Ok(Self {
            kind: LossKind::ElmRidge,
            input_dim,
            feature_map,
            gamma,
            links: outputs,
        })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.feature_map
    }

    /// Number of score blocks `r`.
    pub fn link_dim(&self) -> usize {
        self.links
    }

    pub fn classes(&self) -> Option<usize> {
        (self.kind == LossKind::RidgeSoftmax).then_some(self.links)
    }

    /// Block length `m`.
    pub fn feature_dim(&self) -> usize {
        match self.kind {
            LossKind::MeanEstimation => 1,
            _ => self.feature_map.output_dim(self.input_dim),
        }
    }

    pub fn dim_theta(&self) -> usize {
        self.links * self.feature_dim()
    }

    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            LossKind::MeanEstimation => Ok(vec![1.0]),
            _ if x.len() != self.input_dim => invalid(format!(
                "input has dimension {} (expected {})",
                x.len(),
                self.input_dim
            )),
            _ => Ok(self.feature_map.apply(x)),
        }
    }

    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim_theta() {
            return invalid(format!(
                "theta has {} entries (expected {})",
                theta.len(),
                self.dim_theta()
            ));
        }
        Ok(())
    }

    pub fn scores(&self, theta: &[f64], psi: &[f64]) -> Vec<f64> {
        let m = psi.len();
        theta
            .chunks_exact(m)
            .map(|blk| blk.iter().zip(psi).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Data term (no regularizer) and its derivative with respect to the scores.
    pub fn term(&self, s: &[f64], y: &Label) -> Result<(f64, Vec<f64>)> {
        match self.kind {
            LossKind::MeanEstimation | LossKind::LinearRegression => {
                let Label::Scalar(v) = y else {
                    return invalid(format!("expected scalar label, got {}", y.kind_name()));
                };
                let e = v - s[0];
                Ok((e * e, vec![-2.0 * e]))
            }
            LossKind::ElmRidge => {
                let Label::Vector(v) = y else {
                    return invalid(format!("expected vector label, got {}", y.kind_name()));
                };
                if v.len() != self.links {
                    return invalid(format!(
                        "label has {} outputs (expected {})",
                        v.len(),
                        self.links
                    ));
                }
                let mut val = 0.0;
                let ds = v
                    .iter()
                    .zip(s)
                    .map(|(y, s)| {
                        let e = y - s;
                        val += e * e;
                        -2.0 * e
                    })
                    .collect();
                Ok((val, ds))
            }
            LossKind::RidgeSoftmax => {
                let (p, lse) = softmax_lse(s);
                match y {
                    Label::Class(c) if *c < self.links => {
                        let mut ds = p;
                        ds[*c] -= 1.0;
                        Ok((lse - s[*c], ds))
                    }
                    Label::Probs(t) if t.len() == self.links => {
                        let mass: f64 = t.iter().sum();
                        let val = lse * mass - t.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                        let ds = p.iter().zip(t).map(|(p, t)| p * mass - t).collect();
                        Ok((val, ds))
                    }
                    _ => invalid(format!("label is not a valid {}-class label", self.links)),
                }
            }
        }
    }

    /// Total weight a label contributes to the curvature (one for hard labels).
    pub fn label_mass(&self, y: &Label) -> f64 {
        match y {
            Label::Probs(t) => t.iter().sum(),
            _ => 1.0,
        }
    }

    /// Curvature of a unit-mass data term at scores `s`.
    pub fn curvature(&self, s: &[f64]) -> Curvature {
        match self.kind {
            LossKind::RidgeSoftmax => {
                let (p, _) = softmax_lse(s);
                let r = p.len();
                Curvature::Full(DMatrix::from_fn(r, r, |i, j| {
                    if i == j {
                        p[i] - p[i] * p[j]
                    } else {
                        -p[i] * p[j]
                    }
                }))
            }
            _ => Curvature::ScaledIdentity(2.0),
        }
    }

    pub fn is_quadratic(&self) -> bool {
        self.kind != LossKind::RidgeSoftmax
    }

    pub fn value(&self, theta: &[f64], x: &[f64], y: &Label) -> Result<f64> {
        self.check_theta(theta)?;
        let psi = self.features(x)?;
        let (v, _) = self.term(&self.scores(theta, &psi), y)?;
        Ok(v + self.gamma * norm_sq(theta))
    }

    pub fn grad(&self, theta: &[f64], x: &[f64], y: &Label) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let psi = self.features(x)?;
        let (_, ds) = self.term(&self.scores(theta, &psi), y)?;
        let mut g: Vec<f64> = theta.iter().map(|t| 2.0 * self.gamma * t).collect();
        add_outer(&mut g, &ds, &psi, 1.0);
        Ok(g)
    }

    pub fn hessian(&self, theta: &[f64], x: &[f64], y: &Label) -> Result<DMatrix<f64>> {
        self.check_theta(theta)?;
        let psi = self.features(x)?;
        let s = self.scores(theta, &psi);
        self.term(&s, y)?;
        let d = self.dim_theta();
        let mut h = DMatrix::identity(d, d) * (2.0 * self.gamma);
        add_curvature(&mut h, &self.curvature(&s), &psi, self.label_mass(y));
        Ok(h)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma >= 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        invalid(format!("gamma must be nonnegative, got {gamma}"))
    }
}

pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

/// `g[j·m + a] += w · ds[j] · ψ[a]`
pub(crate) fn add_outer(g: &mut [f64], ds: &[f64], psi: &[f64], w: f64) {
    let m = psi.len();
    for (blk, &d) in g.chunks_exact_mut(m).zip(ds) {
        let c = w * d;
        if c != 0.0 {
            blk.iter_mut().zip(psi).for_each(|(g, p)| *g += c * p);
        }
    }
}

/// `H += w · (C ⊗ ψψᵀ)` in the block layout of θ.
pub(crate) fn add_curvature(h: &mut DMatrix<f64>, c: &Curvature, psi: &[f64], w: f64) {
    let m = psi.len();
    match c {
        Curvature::ScaledIdentity(a) => {
            let r = h.nrows() / m;
            for j in 0..r {
                add_gram_block(h, j * m, j * m, psi, w * a);
            }
        }
        Curvature::Full(cm) => {
            for j in 0..cm.nrows() {
                for k in 0..cm.ncols() {
                    let c = w * cm[(j, k)];
                    if c != 0.0 {
                        add_gram_block(h, j * m, k * m, psi, c);
                    }
                }
            }
        }
    }
}

fn add_gram_block(h: &mut DMatrix<f64>, r0: usize, c0: usize, psi: &[f64], c: f64) {
    for (b, pb) in psi.iter().enumerate() {
        let cb = c * pb;
        let mut col = h.column_mut(c0 + b);
        for (a, pa) in psi.iter().enumerate() {
            col[r0 + a] += cb * pa;
        }
    }
}

/// Softmax probabilities and log-sum-exp, with the max subtracted first.
pub fn softmax_lse(s: &[f64]) -> (Vec<f64>, f64) {
    let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = s.iter().map(|v| (v - mx).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    (p, mx + z.ln())
}

pub fn softmax(s: &[f64]) -> Vec<f64> {
    softmax_lse(s).0
}

pub fn loss_value(model: &LossModel, theta: &[f64], x: &[f64], y: &Label) -> Result<f64> {
    model.value(theta, x, y)
}

pub fn loss_grad(model: &LossModel, theta: &[f64], x: &[f64], y: &Label) -> Result<Vec<f64>> {
    model.grad(theta, x, y)
}

pub fn loss_hessian(
    model: &LossModel,
    theta: &[f64],
    x: &[f64],
    y: &Label,
) -> Result<DMatrix<f64>> {
    model.hessian(theta, x, y)
}
