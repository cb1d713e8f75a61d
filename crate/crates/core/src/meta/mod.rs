//! Stochastic-training variants for neural students: batch PPI losses with a
//! ramped rectifier, meta pseudo-labeling (one teacher) and meta-CPPI (one
//! teacher per fold, trained jointly with the student).

mod checkpoint;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::datasets::{FoldAssignment, Label, LabeledDataset, UnlabeledDataset};
use crate::error::{invalid, Error, Result};
use crate::estimators::check_lambda;
use crate::labelers::{one_hot, Activation, Net, Standardizer};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::tuning::lambda_hat_mean;

pub use checkpoint::{write_loss_curve, Checkpoint, CurveRow, NamedTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaKind {
    /// `t/T`
    Linear,
    /// `(t/T)²`
    Quadratic,
    /// Always 1 (no ramp).
    Constant,
}

/// Rectifier weight at step `t` of `T`; `t` past `T` saturates at 1.
pub fn kappa(t: usize, total: usize, kind: KappaKind) -> f64 {
    if kind == KappaKind::Constant || total == 0 {
        return 1.0;
    }
    let r = t.min(total) as f64 / total as f64;
    match kind {
        KappaKind::Linear => r,
        KappaKind::Quadratic => r * r,
        KappaKind::Constant => 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchLossConfig {
    pub kappa_kind: KappaKind,
    /// Gradient steps `T` (also the horizon of the κ ramp).
    pub total_steps: usize,
    pub lambda: f64,
    /// Re-estimate λ from the teachers every `lambda_refresh` steps instead
    /// of using `lambda`.
    pub auto_lambda: bool,
    pub lambda_refresh: usize,
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    pub lr_student: f64,
    pub lr_teacher: f64,
    /// Supervised teacher steps before the joint loop.
    pub warmup_steps: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Curve rows are recorded every `log_every` steps.
    pub log_every: usize,
    pub seed: u64,
}

impl Default for BatchLossConfig {
    fn default() -> Self {
        Self {
            kappa_kind: KappaKind::Constant,
            total_steps: 500,
            lambda: 1.0,
            auto_lambda: true,
            lambda_refresh: 50,
            batch_labeled: 32,
            batch_unlabeled: 256,
            lr_student: 0.1,
            lr_teacher: 0.1,
            warmup_steps: 200,
            hidden: vec![32],
            activation: Activation::LeakyRelu,
            log_every: 10,
            seed: 0,
        }
    }
}

impl BatchLossConfig {
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if self.total_steps == 0 && self.kappa_kind != KappaKind::Constant {
            return invalid("T must be at least 1 for a ramped rectifier");
        }
        if !(self.lr_student > 0.0 && self.lr_teacher > 0.0) {
            return invalid("learning rates must be positive");
        }
        if self.batch_labeled == 0
            || self.batch_unlabeled == 0
            || self.lambda_refresh == 0
            || self.log_every == 0
        {
            return invalid("batch sizes and intervals must be positive");
        }
        if self.hidden.contains(&0) {
            return invalid("hidden layer sizes must be positive");
        }
        Ok(())
    }
}

/// Labeled minibatch with class targets.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

/// Labeled points of one fold with the fold model's outputs on them.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldBatch {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    /// Target distributions `f^{(k)}(x)` (one-hot for sampled labels).
    pub f_x: Vec<Vec<f64>>,
}

/// `scale · Σ CE(S(x), t)`, gradient accumulated into `grad`.
fn ce_sum<'a>(
    net: &Net,
    theta: &[f64],
    xs: &[Vec<f64>],
    targets: impl Iterator<Item = &'a [f64]>,
    grad: &mut [f64],
    scale: f64,
) -> f64 {
    xs.iter()
        .zip(targets)
        .map(|(x, t)| scale * net.cross_entropy_with(theta, x, t, Some(&mut *grad), scale))
        .sum()
}

fn check_theta(net: &Net, theta: &[f64]) -> Result<()> {
    if theta.len() != net.n_params() {
        return invalid(format!(
            "expected {} parameters, got {}",
            net.n_params(),
            theta.len()
        ));
    }
    Ok(())
}

fn hot(y: &[usize], classes: usize) -> Vec<Vec<f64>> {
    y.iter().map(|&c| one_hot(c, classes)).collect()
}

/// `E_u[ℓ(X̃, f(X̃))] − κ·E_l[ℓ(X, f(X)) − ℓ(X, Y)]` with batch means and
/// cross-entropy loss, and its gradient in `θ`.
pub fn ppi_batch_loss(
    net: &Net,
    theta: &[f64],
    labeled: &LabeledBatch,
    f_labeled: &[Vec<f64>],
    unlabeled: &[Vec<f64>],
    f_unlabeled: &[Vec<f64>],
    kappa: f64,
) -> Result<(f64, Vec<f64>)> {
    check_theta(net, theta)?;
    if labeled.x.len() != labeled.y.len()
        || f_labeled.len() != labeled.x.len()
        || f_unlabeled.len() != unlabeled.len()
    {
        return invalid("batch and prediction sizes disagree");
    }
    let j = net.output_dim();
    let mut g = vec![0.0; theta.len()];
    let mut v = 0.0;
    if !unlabeled.is_empty() {
        v += ce_sum(
            net,
            theta,
            unlabeled,
            f_unlabeled.iter().map(Vec::as_slice),
            &mut g,
            1.0 / unlabeled.len() as f64,
        );
    }
    if !labeled.x.is_empty() && kappa != 0.0 {
        let w = kappa / labeled.x.len() as f64;
        v += ce_sum(
            net,
            theta,
            &labeled.x,
            f_labeled.iter().map(Vec::as_slice),
            &mut g,
            -w,
        );
        v += ce_sum(
            net,
            theta,
            &labeled.x,
            hot(&labeled.y, j).iter().map(Vec::as_slice),
            &mut g,
            w,
        );
    }
    Ok((v, g))
}

/// `λ Σ_k E_u[ℓ(X̃, f^{(k)}(X̃))] − κ Σ_k E_{D^{(k)}}[λ ℓ(X, f^{(k)}(X)) − ℓ(X, Y)]`.
/// `f_unlabeled[k][i]` is the target of model `k` on unlabeled point `i`.
pub fn tuned_cppi_batch_loss(
    net: &Net,
    theta: &[f64],
    lambda: f64,
    kappa: f64,
    unlabeled: &[Vec<f64>],
    f_unlabeled: &[Vec<Vec<f64>>],
    folds: &[FoldBatch],
) -> Result<(f64, Vec<f64>)> {
    check_theta(net, theta)?;
    if f_unlabeled.len() != folds.len() || f_unlabeled.iter().any(|f| f.len() != unlabeled.len()) {
        return invalid("need one prediction set per fold covering the unlabeled batch");
    }
    let j = net.output_dim();
    let mut g = vec![0.0; theta.len()];
    let mut v = 0.0;
    if !unlabeled.is_empty() && lambda != 0.0 {
        // CE is linear in the target, so the K pseudo-label terms of a point
        // collapse into one pass with the summed target.
        let w = lambda / unlabeled.len() as f64;
        let summed: Vec<Vec<f64>> = (0..unlabeled.len())
            .map(|i| {
                let mut t = vec![0.0; j];
                for f in f_unlabeled {
                    t.iter_mut().zip(&f[i]).for_each(|(a, b)| *a += b);
                }
                t
            })
            .collect();
        v += ce_sum(
            net,
            theta,
            unlabeled,
            summed.iter().map(Vec::as_slice),
            &mut g,
            w,
        );
    }
    for fb in folds {
        if fb.x.len() != fb.y.len() || fb.f_x.len() != fb.x.len() {
            return invalid("fold batch sizes disagree");
        }
        if fb.x.is_empty() || kappa == 0.0 {
            continue;
        }
        let w = kappa / fb.x.len() as f64;
        if lambda != 0.0 {
            v += ce_sum(
                net,
                theta,
                &fb.x,
                fb.f_x.iter().map(Vec::as_slice),
                &mut g,
                -w * lambda,
            );
        }
        v += ce_sum(
            net,
            theta,
            &fb.x,
            hot(&fb.y, j).iter().map(Vec::as_slice),
            &mut g,
            w,
        );
    }
    Ok((v, g))
}

/// Mean cross-entropy of hard labels and its gradient.
pub fn supervised_loss(net: &Net, params: &[f64], x: &[Vec<f64>], y: &[usize]) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; params.len()];
    if x.is_empty() {
        return (0.0, g);
    }
    let t = hot(y, net.output_dim());
    let v = ce_sum(
        net,
        params,
        x,
        t.iter().map(Vec::as_slice),
        &mut g,
        1.0 / x.len() as f64,
    );
    (v, g)
}

/// Categorical draw from `p` (assumed normalized).
pub fn sample_class(p: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, &pc) in p.iter().enumerate() {
        acc += pc;
        if u < acc {
            return c;
        }
    }
    p.iter().rposition(|&v| v > 0.0).unwrap_or(0)
}

/// Hard pseudo-labels drawn from the teacher's softmax.
pub fn teacher_sample(teacher: &Net, xs: &[Vec<f64>], rng: &mut Rng) -> Vec<usize> {
    xs.iter()
        .map(|x| {
            let p = teacher.probs(x);
            debug_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            sample_class(&p, rng)
        })
        .collect()
}

fn sgd(params: &mut [f64], grad: &[f64], lr: f64) {
    params.iter_mut().zip(grad).for_each(|(p, g)| *p -= lr * g);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Student and teacher networks; `teachers` has one entry for MPL and one
/// per fold for MCPPI.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentTeacherState {
    pub student: Net,
    pub teachers: Vec<Net>,
    pub step: usize,
}

impl StudentTeacherState {
    pub fn new(student: Net, teachers: Vec<Net>) -> Result<Self> {
        if teachers.is_empty() {
            return invalid("at least one teacher is required");
        }
        if teachers
            .iter()
            .any(|t| t.input_dim() != student.input_dim() || t.output_dim() != student.output_dim())
        {
            return invalid("teachers and student must share input dimension and class count");
        }
        Ok(Self {
            student,
            teachers,
            step: 0,
        })
    }

    pub fn classes(&self) -> usize {
        self.student.output_dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MplStepReport {
    pub student_loss: f64,
    pub teacher_loss: f64,
    /// `g_lᵀ g_u`: labeled gradient after the step against the pseudo-label gradient before it.
    pub meta_scalar: f64,
}

/// One meta pseudo-labeling iteration with teacher 0: sample pseudo-labels,
/// take the student step, then update the teacher on its supervised loss
/// plus the student's feedback `η_S (g_lᵀ g_u) ∇_φ CE(f(X̃), ŷ_u)`.
pub fn mpl_step(
    state: &mut StudentTeacherState,
    labeled: &LabeledBatch,
    unlabeled: &[Vec<f64>],
    lr_student: f64,
    lr_teacher: f64,
    rng: &mut Rng,
) -> Result<MplStepReport> {
    if unlabeled.is_empty() || labeled.x.is_empty() {
        return invalid("MPL needs nonempty labeled and unlabeled batches");
    }
    let j = state.classes();
    let y_u = teacher_sample(&state.teachers[0], unlabeled, rng);
    let theta = state.student.params.clone();
    let (student_loss, g_u) = supervised_loss(&state.student, &theta, unlabeled, &y_u);
    sgd(&mut state.student.params, &g_u, lr_student);
    let (_, g_l) = supervised_loss(
        &state.student,
        &state.student.params,
        &labeled.x,
        &labeled.y,
    );
    let h = dot(&g_l, &g_u);

    let teacher = &state.teachers[0];
    let phi = teacher.params.clone();
    let (teacher_loss, mut g_t) = supervised_loss(teacher, &phi, &labeled.x, &labeled.y);
    let t = hot(&y_u, j);
    ce_sum(
        teacher,
        &phi,
        unlabeled,
        t.iter().map(Vec::as_slice),
        &mut g_t,
        lr_student * h / unlabeled.len() as f64,
    );
    sgd(&mut state.teachers[0].params, &g_t, lr_teacher);
    state.step += 1;
    Ok(MplStepReport {
        student_loss,
        teacher_loss,
        meta_scalar: h,
    })
}

/// Joint minibatch: labeled points tagged with their fold, plus unlabeled points.
#[derive(Debug, Clone, PartialEq)]
pub struct McppiBatch {
    pub labeled: LabeledBatch,
    pub fold_of: Vec<usize>,
    pub unlabeled: Vec<Vec<f64>>,
}

impl McppiBatch {
    /// Positions (within the labeled batch) of fold `k`'s points.
    pub fn fold_members(&self, k: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == k)
            .collect()
    }

    fn pick(&self, idx: &[usize]) -> (Vec<Vec<f64>>, Vec<usize>) {
        (
            idx.iter().map(|&i| self.labeled.x[i].clone()).collect(),
            idx.iter().map(|&i| self.labeled.y[i]).collect(),
        )
    }
}

/// Teacher-sampled labels: `unlabeled[k]` on the unlabeled batch and
/// `labeled[k]` on fold `k`'s batch points (in `fold_members(k)` order).
#[derive(Debug, Clone, PartialEq)]
pub struct SampledLabels {
    pub unlabeled: Vec<Vec<usize>>,
    pub labeled: Vec<Vec<usize>>,
}

pub fn sample_teacher_labels(
    state: &StudentTeacherState,
    batch: &McppiBatch,
    rng: &mut Rng,
) -> SampledLabels {
    let mut unlabeled = Vec::with_capacity(state.teachers.len());
    let mut labeled = Vec::with_capacity(state.teachers.len());
    for (k, t) in state.teachers.iter().enumerate() {
        unlabeled.push(teacher_sample(t, &batch.unlabeled, rng));
        let (x, _) = batch.pick(&batch.fold_members(k));
        labeled.push(teacher_sample(t, &x, rng));
    }
    SampledLabels { unlabeled, labeled }
}

/// Tuned CPPI batch loss of the student with sampled (one-hot) teacher labels.
pub fn mcppi_student_loss(
    student: &Net,
    theta: &[f64],
    batch: &McppiBatch,
    sampled: &SampledLabels,
    lambda: f64,
    kappa: f64,
) -> Result<(f64, Vec<f64>)> {
    let j = student.output_dim();
    let k = sampled.unlabeled.len();
    if sampled.labeled.len() != k {
        return invalid("sampled labels disagree in teacher count");
    }
    let f_u: Vec<Vec<Vec<f64>>> = sampled.unlabeled.iter().map(|y| hot(y, j)).collect();
    let folds = (0..k)
        .map(|kk| {
            let (x, y) = batch.pick(&batch.fold_members(kk));
            if sampled.labeled[kk].len() != x.len() {
                return invalid("sampled fold labels do not match the batch");
            }
            Ok(FoldBatch {
                x,
                y,
                f_x: hot(&sampled.labeled[kk], j),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    tuned_cppi_batch_loss(
        student,
        theta,
        lambda,
        kappa,
        &batch.unlabeled,
        &f_u,
        &folds,
    )
}

/// `θ ← θ − η_S ∇L`; returns the pre-step parameters and the loss.
pub fn mcppi_student_step(
    state: &mut StudentTeacherState,
    batch: &McppiBatch,
    sampled: &SampledLabels,
    lambda: f64,
    kappa: f64,
    lr_student: f64,
) -> Result<(Vec<f64>, f64)> {
    let theta = state.student.params.clone();
    let (v, g) = mcppi_student_loss(&state.student, &theta, batch, sampled, lambda, kappa)?;
    sgd(&mut state.student.params, &g, lr_student);
    Ok((theta, v))
}

/// Gradient for teacher `k`: its supervised loss on the batch points outside
/// fold `k`, plus the one-step meta-gradient
/// `λη_S (g_lᵀ g_u) ∇CE(f(X̃), ŷ_u) − λη_S (g_lᵀ g_l^{(k)}) ∇CE(f(X), ŷ_l)`,
/// where `g_l` is taken at `theta_post` and `g_u`, `g_l^{(k)}` at `theta_pre`.
#[allow(clippy::too_many_arguments)]
pub fn mcppi_teacher_grad(
    student: &Net,
    theta_pre: &[f64],
    theta_post: &[f64],
    teacher: &Net,
    k: usize,
    batch: &McppiBatch,
    sampled: &SampledLabels,
    lambda: f64,
    lr_student: f64,
) -> Result<(f64, Vec<f64>)> {
    check_theta(student, theta_pre)?;
    check_theta(student, theta_post)?;
    if k >= sampled.unlabeled.len() || k >= sampled.labeled.len() {
        return invalid(format!("no sampled labels for teacher {k}"));
    }
    let j = student.output_dim();
    let phi = &teacher.params;
    let outside: Vec<usize> = (0..batch.fold_of.len())
        .filter(|&i| batch.fold_of[i] != k)
        .collect();
    let (xo, yo) = batch.pick(&outside);
    let (loss, mut grad) = supervised_loss(teacher, phi, &xo, &yo);
    if lambda == 0.0 {
        return Ok((loss, grad));
    }
    let (_, g_l) = supervised_loss(student, theta_post, &batch.labeled.x, &batch.labeled.y);
    let y_u = &sampled.unlabeled[k];
    if !batch.unlabeled.is_empty() {
        let (_, g_u) = supervised_loss(student, theta_pre, &batch.unlabeled, y_u);
        let w = lambda * lr_student * dot(&g_l, &g_u) / batch.unlabeled.len() as f64;
        let t = hot(y_u, j);
        ce_sum(
            teacher,
            phi,
            &batch.unlabeled,
            t.iter().map(Vec::as_slice),
            &mut grad,
            w,
        );
    }
    let (xk, _) = batch.pick(&batch.fold_members(k));
    let y_l = &sampled.labeled[k];
    if !xk.is_empty() {
        let (_, g_lk) = supervised_loss(student, theta_pre, &xk, y_l);
        let w = -lambda * lr_student * dot(&g_l, &g_lk) / xk.len() as f64;
        let t = hot(y_l, j);
        ce_sum(teacher, phi, &xk, t.iter().map(Vec::as_slice), &mut grad, w);
    }
    Ok((loss, grad))
}

/// Student network with the input standardization it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Student {
    pub net: Net,
    pub input_std: Standardizer,
}

impl Student {
    pub fn predict(&self, x: &[f64]) -> usize {
        let p = self.net.probs(&self.input_std.apply(x));
        crate::labelers::argmax(&p)
    }
}

#[derive(Debug, Clone)]
pub struct MetaRun {
    pub student: Student,
    pub state: StudentTeacherState,
    pub lambda: f64,
    pub curve: Vec<CurveRow>,
}

struct Prepared {
    xs: Vec<Vec<f64>>,
    ys: Vec<usize>,
    xu: Vec<Vec<f64>>,
    classes: usize,
    input_std: Standardizer,
}

fn prepare(labeled: &LabeledDataset, unlabeled: &UnlabeledDataset) -> Result<Prepared> {
    let classes = labeled
        .classes()
        .ok_or_else(|| Error::InvalidArgument("meta training needs class labels".into()))?;
    if labeled.is_empty() || unlabeled.is_empty() {
        return invalid("meta training needs labeled and unlabeled data");
    }
    if labeled.dim() != unlabeled.dim() {
        return invalid("labeled and unlabeled inputs differ in dimension");
    }
    let ys = labeled
        .labels()
        .iter()
        .map(|l| match l {
            Label::Class(c) => Ok(*c),
            _ => invalid("meta training needs hard class labels"),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut all = labeled.inputs().to_vec();
    all.extend_from_slice(unlabeled.inputs());
    let input_std = Standardizer::fit(&all);
    Ok(Prepared {
        xs: labeled
            .inputs()
            .iter()
            .map(|x| input_std.apply(x))
            .collect(),
        ys,
        xu: unlabeled
            .inputs()
            .iter()
            .map(|x| input_std.apply(x))
            .collect(),
        classes,
        input_std,
    })
}

fn draw(pool: &[usize], b: usize, rng: &mut Rng) -> Vec<usize> {
    if pool.len() <= b {
        return pool.to_vec();
    }
    let mut idx: Vec<usize> = sample(rng, pool.len(), b)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    idx.sort_unstable();
    idx
}

fn net_sizes(d: usize, cfg: &BatchLossConfig, classes: usize) -> Vec<usize> {
    let mut s = vec![d];
    s.extend(&cfg.hidden);
    s.push(classes);
    s
}

/// Supervised warm-up of teacher `k` on `pool`.
fn warm_up(teacher: &mut Net, p: &Prepared, pool: &[usize], cfg: &BatchLossConfig, rng: &mut Rng) {
    for _ in 0..cfg.warmup_steps {
        let idx = draw(pool, cfg.batch_labeled, rng);
        let x: Vec<Vec<f64>> = idx.iter().map(|&i| p.xs[i].clone()).collect();
        let y: Vec<usize> = idx.iter().map(|&i| p.ys[i]).collect();
        let (_, g) = supervised_loss(teacher, &teacher.params, &x, &y);
        sgd(&mut teacher.params, &g, cfg.lr_teacher);
    }
}

/// λ from the one-hot labels against each labeled point's held-out teacher
/// probabilities: `Σ_c cov(1{Y=c}, f_c) / ((1 + n/N) Σ_c var(f_c))`.
pub fn teacher_lambda(
    teachers: &[Net],
    xs: &[Vec<f64>],
    ys: &[usize],
    fold_of: impl Fn(usize) -> usize,
    big_n: usize,
) -> Result<f64> {
    let probs: Vec<Vec<f64>> = xs
        .iter()
        .enumerate()
        .map(|(i, x)| teachers[fold_of(i)].probs(x))
        .collect();
    pooled_class_lambda(ys, &probs, big_n)
}

/// Mean-estimation λ̂ over the per-class-centered, pooled one-hot labels and
/// predicted class distributions.
pub fn pooled_class_lambda(ys: &[usize], probs: &[Vec<f64>], big_n: usize) -> Result<f64> {
    if ys.len() != probs.len() || ys.is_empty() || big_n == 0 {
        return invalid("need matching, non-empty labels and predictions and N > 0");
    }
    let classes = probs[0].len();
    let m = ys.len() as f64;
    let mut y_flat = Vec::with_capacity(ys.len() * classes);
    let mut f_flat = Vec::with_capacity(ys.len() * classes);
    for c in 0..classes {
        let my = ys.iter().filter(|&&y| y == c).count() as f64 / m;
        let mf = probs.iter().map(|p| p[c]).sum::<f64>() / m;
        for (y, p) in ys.iter().zip(probs) {
            y_flat.push(if *y == c { 1.0 } else { 0.0 } - my);
            f_flat.push(p[c] - mf);
        }
    }
    Ok(lambda_hat_mean(&y_flat, &f_flat, m / big_n as f64)?.lambda)
}

/// Meta-CPPI: per step, draw batches, sample labels from every teacher,
/// update the student on the tuned CPPI loss, then each teacher. With
/// `update_teachers` off this is plain tuned-CPPI batch training with
/// fixed (warmed-up) teachers.
pub fn mcppi_train(
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    folds: &FoldAssignment,
    cfg: &BatchLossConfig,
    update_teachers: bool,
) -> Result<MetaRun> {
    cfg.validate()?;
    if folds.n() != labeled.len() {
        return invalid("fold assignment does not cover the labeled set");
    }
    let p = prepare(labeled, unlabeled)?;
    let sizes = net_sizes(labeled.dim(), cfg, p.classes);
    let student = Net::new(
        sizes.clone(),
        cfg.activation,
        derive_seed(cfg.seed, &["student".into()]),
    )?;
    let mut teachers = (0..folds.k())
        .map(|k| {
            Net::new(
                sizes.clone(),
                cfg.activation,
                derive_seed(cfg.seed, &["teacher".into(), k.into()]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &["warmup".into()]));
    for (k, t) in teachers.iter_mut().enumerate() {
        warm_up(t, &p, &folds.complement(k), cfg, &mut rng);
    }
    let mut state = StudentTeacherState::new(student, teachers)?;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &["loop".into()]));
    let all_l: Vec<usize> = (0..p.xs.len()).collect();
    let all_u: Vec<usize> = (0..p.xu.len()).collect();
    let mut lambda = cfg.lambda;
    let mut curve = Vec::new();
    for step in 0..cfg.total_steps {
        if cfg.auto_lambda && step % cfg.lambda_refresh == 0 {
            lambda = teacher_lambda(
                &state.teachers,
                &p.xs,
                &p.ys,
                |i| folds.fold_of(i),
                p.xu.len(),
            )?;
        }
        let li = draw(&all_l, cfg.batch_labeled, &mut rng);
        let ui = draw(&all_u, cfg.batch_unlabeled, &mut rng);
        let batch = McppiBatch {
            labeled: LabeledBatch {
                x: li.iter().map(|&i| p.xs[i].clone()).collect(),
                y: li.iter().map(|&i| p.ys[i]).collect(),
            },
            fold_of: li.iter().map(|&i| folds.fold_of(i)).collect(),
            unlabeled: ui.iter().map(|&i| p.xu[i].clone()).collect(),
        };
        let sampled = sample_teacher_labels(&state, &batch, &mut rng);
        let kap = kappa(step, cfg.total_steps, cfg.kappa_kind);
        let (theta_pre, student_loss) =
            mcppi_student_step(&mut state, &batch, &sampled, lambda, kap, cfg.lr_student)?;
        let mut teacher_losses = Vec::with_capacity(state.teachers.len());
        if update_teachers {
            for k in 0..state.teachers.len() {
                let (loss, g) = mcppi_teacher_grad(
                    &state.student,
                    &theta_pre,
                    &state.student.params,
                    &state.teachers[k],
                    k,
                    &batch,
                    &sampled,
                    lambda,
                    cfg.lr_student,
                )?;
                sgd(&mut state.teachers[k].params, &g, cfg.lr_teacher);
                teacher_losses.push(loss);
            }
        }
        state.step += 1;
        if step % cfg.log_every == 0 || step + 1 == cfg.total_steps {
            curve.push(CurveRow {
                step,
                student_loss,
                teacher_losses,
                lambda,
            });
        }
    }
    Ok(MetaRun {
        student: Student {
            net: state.student.clone(),
            input_std: p.input_std,
        },
        state,
        lambda,
        curve,
    })
}

/// Pseudo-labels from already fitted fold models: `held_out[i]` is the class
/// predicted for labeled point `i` by the model of its fold, `unlabeled[k][j]`
/// the class model `k` predicts for unlabeled point `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPseudoLabels {
    pub held_out: Vec<usize>,
    pub unlabeled: Vec<Vec<usize>>,
}

/// Student trained on the tuned CPPI batch loss with fixed fold labelers.
/// `lambda = None` estimates λ once from the held-out predictions.
pub fn fixed_cppi_train(
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    folds: &FoldAssignment,
    pseudo: &FixedPseudoLabels,
    cfg: &BatchLossConfig,
    lambda: Option<f64>,
) -> Result<MetaRun> {
    cfg.validate()?;
    let p = prepare(labeled, unlabeled)?;
    let k = folds.k();
    if folds.n() != labeled.len()
        || pseudo.held_out.len() != labeled.len()
        || pseudo.unlabeled.len() != k
    {
        return invalid("pseudo-labels do not match the folds and datasets");
    }
    if pseudo.unlabeled.iter().any(|u| u.len() != p.xu.len()) {
        return invalid("every fold model needs a label for each unlabeled point");
    }
    let j = p.classes;
    let lambda = match lambda {
        Some(l) => {
            check_lambda(l)?;
            l
        }
        None => {
            let probs: Vec<Vec<f64>> = pseudo.held_out.iter().map(|&c| one_hot(c, j)).collect();
            pooled_class_lambda(&p.ys, &probs, p.xu.len())?
        }
    };
    let sizes = net_sizes(labeled.dim(), cfg, j);
    let mut net = Net::new(
        sizes,
        cfg.activation,
        derive_seed(cfg.seed, &["student".into()]),
    )?;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &["loop".into()]));
    let all_l: Vec<usize> = (0..p.xs.len()).collect();
    let all_u: Vec<usize> = (0..p.xu.len()).collect();
    let mut curve = Vec::new();
    for step in 0..cfg.total_steps {
        let li = draw(&all_l, cfg.batch_labeled, &mut rng);
        let ui = draw(&all_u, cfg.batch_unlabeled, &mut rng);
        let xu: Vec<Vec<f64>> = ui.iter().map(|&i| p.xu[i].clone()).collect();
        let f_u: Vec<Vec<Vec<f64>>> = pseudo
            .unlabeled
            .iter()
            .map(|labels| ui.iter().map(|&i| one_hot(labels[i], j)).collect())
            .collect();
        let fold_batches: Vec<FoldBatch> = (0..k)
            .map(|kk| {
                let idx: Vec<usize> = li
                    .iter()
                    .copied()
                    .filter(|&i| folds.fold_of(i) == kk)
                    .collect();
                FoldBatch {
                    x: idx.iter().map(|&i| p.xs[i].clone()).collect(),
                    y: idx.iter().map(|&i| p.ys[i]).collect(),
                    f_x: idx
                        .iter()
                        .map(|&i| one_hot(pseudo.held_out[i], j))
                        .collect(),
                }
            })
            .collect();
        let kap = kappa(step, cfg.total_steps, cfg.kappa_kind);
        let theta = net.params.clone();
        let (loss, g) = tuned_cppi_batch_loss(&net, &theta, lambda, kap, &xu, &f_u, &fold_batches)?;
        sgd(&mut net.params, &g, cfg.lr_student);
        if step % cfg.log_every == 0 || step + 1 == cfg.total_steps {
            curve.push(CurveRow {
                step,
                student_loss: loss,
                teacher_losses: Vec::new(),
                lambda,
            });
        }
    }
    let state = StudentTeacherState {
        student: net.clone(),
        teachers: Vec::new(),
        step: cfg.total_steps,
    };
    Ok(MetaRun {
        student: Student {
            net,
            input_std: p.input_std,
        },
        state,
        lambda,
        curve,
    })
}

/// Meta pseudo-labeling with a single teacher warmed up on all labeled data.
pub fn mpl_train(
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    cfg: &BatchLossConfig,
) -> Result<MetaRun> {
    cfg.validate()?;
    let p = prepare(labeled, unlabeled)?;
    let sizes = net_sizes(labeled.dim(), cfg, p.classes);
    let student = Net::new(
        sizes.clone(),
        cfg.activation,
        derive_seed(cfg.seed, &["student".into()]),
    )?;
    let mut teacher = Net::new(
        sizes,
        cfg.activation,
        derive_seed(cfg.seed, &["teacher".into(), 0usize.into()]),
    )?;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &["warmup".into()]));
    let all_l: Vec<usize> = (0..p.xs.len()).collect();
    warm_up(&mut teacher, &p, &all_l, cfg, &mut rng);
    let mut state = StudentTeacherState::new(student, vec![teacher])?;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &["loop".into()]));
    let all_u: Vec<usize> = (0..p.xu.len()).collect();
    let mut curve = Vec::new();
    for step in 0..cfg.total_steps {
        let li = draw(&all_l, cfg.batch_labeled, &mut rng);
        let ui = draw(&all_u, cfg.batch_unlabeled, &mut rng);
        let lb = LabeledBatch {
            x: li.iter().map(|&i| p.xs[i].clone()).collect(),
            y: li.iter().map(|&i| p.ys[i]).collect(),
        };
        let xu: Vec<Vec<f64>> = ui.iter().map(|&i| p.xu[i].clone()).collect();
        let rep = mpl_step(
            &mut state,
            &lb,
            &xu,
            cfg.lr_student,
            cfg.lr_teacher,
            &mut rng,
        )?;
        if step % cfg.log_every == 0 || step + 1 == cfg.total_steps {
            curve.push(CurveRow {
                step,
                student_loss: rep.student_loss,
                teacher_losses: vec![rep.teacher_loss],
                lambda: 1.0,
            });
        }
    }
    Ok(MetaRun {
        student: Student {
            net: state.student.clone(),
            input_std: p.input_std,
        },
        state,
        lambda: 1.0,
        curve,
    })
}
