//! Dense feed-forward networks with hand-written backpropagation.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::simple::{argmax, row_to_label, target_rows};
use super::Predictor;
use crate::datasets::{Label, LabeledDataset};
use crate::error::{invalid, Result};
use crate::rng::rng_from_seed;

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    Sigmoid,
}

const LEAKY_SLOPE: f64 = 0.01;

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::LeakyRelu => {
                if v > 0.0 {
                    v
                } else {
                    LEAKY_SLOPE * v
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
        }
    }

    /// Derivative given the pre-activation `v` and output `a`.
    fn deriv(self, v: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => f64::from(u8::from(v > 0.0)),
            Activation::LeakyRelu => {
                if v > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

/// Network parameters stored flat: for each layer, `W` (out × in, row-major)
/// followed by `b`. Hidden layers use `act`; the output layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Net {
    pub sizes: Vec<usize>,
    pub act: Activation,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer (the first entry is `x`).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer; the last entry is the network output.
    pre: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.pre.last().expect("at least one layer")
    }
}

impl Net {
    pub fn new(sizes: Vec<usize>, act: Activation, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return invalid("network needs at least two positive layer sizes");
        }
        let mut rng = rng_from_seed(seed);
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let var = match act {
                Activation::Sigmoid => 1.0 / fan_in as f64,
                _ => 2.0 / fan_in as f64,
            };
            let dist = Normal::new(0.0, var.sqrt()).expect("positive variance");
            params.extend((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self { sizes, act, params })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty sizes")
    }

    pub fn forward_cache(&self, x: &[f64]) -> MlpCache {
        self.forward_with(&self.params, x)
    }

    /// Forward pass using an alternative parameter vector of the same shape.
    pub fn forward_with(&self, params: &[f64], x: &[f64]) -> MlpCache {
        debug_assert_eq!(x.len(), self.input_dim());
        let layers = self.sizes.len() - 1;
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut cur = x.to_vec();
        let mut off = 0;
        for l in 0..layers {
            let (ni, no) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[off..off + ni * no];
            let b = &params[off + ni * no..off + ni * no + no];
            off += ni * no + no;
            let z: Vec<f64> = (0..no)
                .map(|o| {
                    b[o] + w[o * ni..(o + 1) * ni]
                        .iter()
                        .zip(&cur)
                        .map(|(a, c)| a * c)
                        .sum::<f64>()
                })
                .collect();
            let next = if l + 1 < layers {
                z.iter().map(|&v| self.act.apply(v)).collect()
            } else {
                Vec::new()
            };
            inputs.push(std::mem::replace(&mut cur, next));
            pre.push(z);
        }
        MlpCache { inputs, pre }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cache(x).pre.pop().expect("at least one layer")
    }

    /// Accumulate `scale · ∂(doutᵀ out)/∂params` into `grad`.
    pub fn backward(&self, cache: &MlpCache, dout: &[f64], grad: &mut [f64], scale: f64) {
        self.backward_with(&self.params, cache, dout, grad, scale);
    }

    pub fn backward_with(
        &self,
        params: &[f64],
        cache: &MlpCache,
        dout: &[f64],
        grad: &mut [f64],
        scale: f64,
    ) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta: Vec<f64> = dout.iter().map(|d| d * scale).collect();
        for l in (0..layers).rev() {
            let (ni, no) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &cache.inputs[l];
            for o in 0..no {
                let d = delta[o];
                if d != 0.0 {
                    grad[off + o * ni..off + (o + 1) * ni]
                        .iter_mut()
                        .zip(input)
                        .for_each(|(g, x)| *g += d * x);
                }
                grad[off + ni * no + o] += d;
            }
            if l > 0 {
                let w = &params[off..off + ni * no];
                let prev_pre = &cache.pre[l - 1];
                delta = (0..ni)
                    .map(|i| {
                        let s: f64 = (0..no).map(|o| w[o * ni + i] * delta[o]).sum();
                        s * self.act.deriv(prev_pre[i], input[i])
                    })
                    .collect();
            }
        }
    }

    /// Softmax class probabilities of the output layer.
    pub fn probs(&self, x: &[f64]) -> Vec<f64> {
        crate::losses::softmax(&self.forward(x))
    }

    /// Cross-entropy `−Σ t_j log p_j` with `p` floored at [`PROB_FLOOR`].
    /// When `grad` is given, `scale · ∇_params` is added to it.
    pub fn cross_entropy(
        &self,
        x: &[f64],
        target: &[f64],
        grad: Option<&mut [f64]>,
        scale: f64,
    ) -> f64 {
        self.cross_entropy_with(&self.params, x, target, grad, scale)
    }

    pub fn cross_entropy_with(
        &self,
        params: &[f64],
        x: &[f64],
        target: &[f64],
        grad: Option<&mut [f64]>,
        scale: f64,
    ) -> f64 {
        let cache = self.forward_with(params, x);
        let p = crate::losses::softmax(cache.output());
        let loss = -target
            .iter()
            .zip(&p)
            .filter(|(t, _)| **t != 0.0)
            .map(|(t, p)| t * p.max(PROB_FLOOR).ln())
            .sum::<f64>();
        if let Some(g) = grad {
            let mass: f64 = target.iter().sum();
            let dout: Vec<f64> = p.iter().zip(target).map(|(p, t)| p * mass - t).collect();
            self.backward_with(params, &cache, &dout, g, scale);
        }
        loss
    }

    /// Squared error `Σ (t_j − out_j)²`, gradient accumulated like `cross_entropy`.
    pub fn squared_error(
        &self,
        x: &[f64],
        target: &[f64],
        grad: Option<&mut [f64]>,
        scale: f64,
    ) -> f64 {
        let cache = self.forward_cache(x);
        let out = cache.output();
        let loss = out.iter().zip(target).map(|(o, t)| (o - t) * (o - t)).sum();
        if let Some(g) = grad {
            let dout: Vec<f64> = out.iter().zip(target).map(|(o, t)| 2.0 * (o - t)).collect();
            self.backward(&cache, &dout, g, scale);
        }
        loss
    }
}

/// One-hot row for a class index.
pub fn one_hot(c: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[c] = 1.0;
    v
}

/// Adam optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// Per-coordinate affine standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let shift: Vec<f64> = (0..d)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let scale = (0..d)
            .map(|j| {
                let v = rows.iter().map(|r| (r[j] - shift[j]).powi(2)).sum::<f64>() / n;
                if v > 1e-24 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { shift, scale }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            shift: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.shift)
            .zip(&self.scale)
            .map(|((v, s), c)| (v - s) / c)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.shift)
            .zip(&self.scale)
            .map(|((v, s), c)| v * c + s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: vec![64, 128],
            activation: Activation::LeakyRelu,
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: 32,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) || self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return invalid("MLP sizes, batch size and learning rate must be positive");
        }
        Ok(())
    }
}

/// Fitted MLP labeler: regression on standardized targets, or softmax
/// classification.
#[derive(Debug, Clone)]
pub struct MlpLabeler {
    pub net: Net,
    pub input_std: Standardizer,
    /// `None` for classifiers.
    pub output_std: Option<Standardizer>,
    template: Label,
}

pub type Mlp = MlpLabeler;

impl MlpLabeler {
    pub fn fit(data: &LabeledDataset, p: &MlpParams, seed: u64) -> Result<Self> {
        p.validate()?;
        if data.is_empty() {
            return invalid("empty dataset");
        }
        let (rows, width) = target_rows(data)?;
        let classify = data.classes().is_some();
        let input_std = Standardizer::fit(data.inputs());
        let output_std = (!classify).then(|| Standardizer::fit(&rows));
        let xs: Vec<Vec<f64>> = data.inputs().iter().map(|x| input_std.apply(x)).collect();
        let ts: Vec<Vec<f64>> = match &output_std {
            Some(s) => rows.iter().map(|r| s.apply(r)).collect(),
            None => rows,
        };
        let mut sizes = vec![data.dim()];
        sizes.extend(&p.hidden);
        sizes.push(width);
        let mut net = Net::new(sizes, p.activation, seed)?;
        let mut opt = Adam::new(net.n_params(), p.learning_rate);
        let mut rng = rng_from_seed(seed ^ 0x5eed);
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let mut grad = vec![0.0; net.n_params()];
        for _ in 0..p.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(p.batch_size) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let scale = 1.0 / batch.len() as f64;
                for &i in batch {
                    if classify {
                        net.cross_entropy(&xs[i], &ts[i], Some(&mut grad), scale);
                    } else {
                        net.squared_error(&xs[i], &ts[i], Some(&mut grad), scale);
                    }
                }
                opt.step(&mut net.params, &grad);
            }
        }
        Ok(Self {
            net,
            input_std,
            output_std,
            template: data.label(0).clone(),
        })
    }

    /// Class probabilities (classifiers only).
    pub fn probs(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.output_std
            .is_none()
            .then(|| self.net.probs(&self.input_std.apply(x)))
    }
}

impl Predictor for MlpLabeler {
    fn predict(&self, x: &[f64]) -> Label {
        let out = self.net.forward(&self.input_std.apply(x));
        match &self.output_std {
            Some(s) => row_to_label(s.invert(&out), &self.template),
            None => Label::Class(argmax(&out)),
        }
    }
}
