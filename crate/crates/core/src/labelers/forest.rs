//! Random forest regression (classification via averaged one-hot leaves).

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::simple::{all_inputs_identical, row_to_label, target_rows, ConstantMean};
use super::{Labeler, Predictor};
use crate::datasets::{Label, LabeledDataset};
use crate::error::{invalid, Result};
use crate::rng::{child_seed, rng_from_seed, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `ceil(sqrt(d))`.
    pub mtry: Option<usize>,
    /// Resample rows with replacement for each tree.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 50,
            max_depth: 8,
            min_leaf: 5,
            mtry: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 || self.min_leaf == 0 || self.mtry == Some(0) {
            return invalid("forest trees, min_leaf and mtry must be positive");
        }
        Ok(())
    }
}

/// Split node; a leaf points both children at itself so every lookup can
/// run a fixed number of steps without branching.
#[derive(Debug, Clone, Copy)]
struct Node {
    feature: u32,
    threshold: f64,
    child: [u32; 2],
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
    /// Offset of each node's leaf value in `values` (unused for splits).
    value_of: Vec<u32>,
    values: Vec<f64>,
    depth: usize,
}

impl Tree {
    #[inline]
    fn leaf_offset(&self, x: &[f64]) -> usize {
        let mut i = 0usize;
        for _ in 0..self.depth {
            let n = &self.nodes[i];
            i = n.child[usize::from(x[n.feature as usize] > n.threshold)] as usize;
        }
        self.value_of[i] as usize
    }
}

#[derive(Debug, Clone)]
pub struct Forest {
    trees: Vec<Tree>,
    width: usize,
    template: Label,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [Vec<f64>],
    width: usize,
    p: &'a ForestParams,
    mtry: usize,
    rng: Rng,
    scratch: Vec<(f64, usize)>,
}

impl Builder<'_> {
    fn mean(&self, idx: &[usize]) -> Vec<f64> {
        let mut m = vec![0.0; self.width];
        for &i in idx {
            m.iter_mut().zip(&self.y[i]).for_each(|(a, b)| *a += b);
        }
        m.iter_mut().for_each(|a| *a /= idx.len() as f64);
        m
    }

    fn push_leaf(&self, tree: &mut Tree, idx: &[usize]) -> u32 {
        let off = tree.values.len() as u32;
        tree.values.extend(self.mean(idx));
        let me = tree.nodes.len() as u32;
        tree.nodes.push(Node {
            feature: 0,
            threshold: 0.0,
            child: [me, me],
        });
        tree.value_of.push(off);
        me
    }

    /// Best (score, feature, threshold, left count) over a random feature subset.
    fn best_split(&mut self, idx: &[usize]) -> Option<(f64, usize, f64)> {
        let d = self.x[0].len();
        let n = idx.len();
        let min_leaf = self.p.min_leaf;
        let total = {
            let mut t = vec![0.0; self.width];
            for &i in idx {
                t.iter_mut().zip(&self.y[i]).for_each(|(a, b)| *a += b);
            }
            t
        };
        let base: f64 = total.iter().map(|s| s * s).sum::<f64>() / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let feats = sample(&mut self.rng, d, self.mtry.min(d)).into_vec();
        let mut left = vec![0.0; self.width];
        for f in feats {
            self.scratch.clear();
            self.scratch.extend(idx.iter().map(|&i| (self.x[i][f], i)));
            self.scratch
                .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            left.iter_mut().for_each(|v| *v = 0.0);
            for pos in 0..n - 1 {
                let i = self.scratch[pos].1;
                left.iter_mut().zip(&self.y[i]).for_each(|(a, b)| *a += b);
                let nl = pos + 1;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let (xa, xb) = (self.scratch[pos].0, self.scratch[pos + 1].0);
                if xa == xb {
                    continue;
                }
                let sl: f64 = left.iter().map(|s| s * s).sum::<f64>() / nl as f64;
                let sr: f64 = left
                    .iter()
                    .zip(&total)
                    .map(|(l, t)| (t - l) * (t - l))
                    .sum::<f64>()
                    / nr as f64;
                let gain = sl + sr - base;
                if gain > 1e-12 * base.abs().max(1e-300) && best.is_none_or(|b| gain > b.0) {
                    best = Some((gain, f, 0.5 * (xa + xb)));
                }
            }
        }
        best
    }

    fn grow(&mut self, tree: &mut Tree, idx: &mut [usize], depth: usize) -> u32 {
        tree.depth = tree.depth.max(depth);
        if depth >= self.p.max_depth || idx.len() < 2 * self.p.min_leaf {
            return self.push_leaf(tree, idx);
        }
        let Some((_, f, thr)) = self.best_split(idx) else {
            return self.push_leaf(tree, idx);
        };
        // partition in place: left side first
        let mut cut = 0;
        for j in 0..idx.len() {
            if self.x[idx[j]][f] <= thr {
                idx.swap(cut, j);
                cut += 1;
            }
        }
        let me = tree.nodes.len();
        tree.nodes.push(Node {
            feature: f as u32,
            threshold: thr,
            child: [0, 0],
        });
        tree.value_of.push(0);
        let (l, r) = idx.split_at_mut(cut);
        let li = self.grow(tree, l, depth + 1);
        let ri = self.grow(tree, r, depth + 1);
        tree.nodes[me].child = [li, ri];
        me as u32
    }
}

impl Forest {
    /// Returns a flagged constant predictor when all inputs coincide.
    pub fn fit(data: &LabeledDataset, p: &ForestParams, seed: u64) -> Result<Labeler> {
        p.validate()?;
        if data.is_empty() {
            return invalid("empty dataset");
        }
        if all_inputs_identical(data) {
            return Ok(Labeler::new(ConstantMean::fit(data)?.into_fallback()));
        }
        Ok(Labeler::new(Self::fit_forest(data, p, seed)?))
    }

    pub fn fit_forest(data: &LabeledDataset, p: &ForestParams, seed: u64) -> Result<Self> {
        let (y, width) = target_rows(data)?;
        let d = data.dim();
        let n = data.len();
        let mtry = p
            .mtry
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .max(1);
        let mut trees = Vec::with_capacity(p.trees);
        for t in 0..p.trees {
            let mut b = Builder {
                x: data.inputs(),
                y: &y,
                width,
                p,
                mtry,
                rng: rng_from_seed(child_seed(seed, t as u64)),
                scratch: Vec::with_capacity(n),
            };
            let mut idx: Vec<usize> = if p.bootstrap {
                (0..n).map(|_| b.rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut tree = Tree {
                nodes: Vec::new(),
                value_of: Vec::new(),
                values: Vec::new(),
                depth: 0,
            };
            b.grow(&mut tree, &mut idx, 0);
            trees.push(tree);
        }
        Ok(Self {
            trees,
            width,
            template: data.label(0).clone(),
        })
    }

    /// Averaged leaf values (class distribution for class labels).
    pub fn predict_row(&self, x: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.width];
        for t in &self.trees {
            let off = t.leaf_offset(x);
            acc.iter_mut()
                .zip(&t.values[off..off + self.width])
                .for_each(|(a, v)| *a += v);
        }
        let m = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= m);
        acc
    }

    /// Rows for many inputs, visiting one tree at a time.
    pub fn predict_rows(&self, inputs: &[Vec<f64>]) -> Vec<f64> {
        let w = self.width;
        let mut acc = vec![0.0; inputs.len() * w];
        for t in &self.trees {
            if w == 1 {
                // walk several points in lockstep so their loads overlap
                const LANES: usize = 8;
                let mut a_chunks = acc.chunks_exact_mut(LANES);
                let mut x_chunks = inputs.chunks_exact(LANES);
                for (a, xs) in (&mut a_chunks).zip(&mut x_chunks) {
                    let mut idx = [0usize; LANES];
                    for _ in 0..t.depth {
                        for (i, x) in idx.iter_mut().zip(xs) {
                            let n = &t.nodes[*i];
                            *i = n.child[usize::from(x[n.feature as usize] > n.threshold)] as usize;
                        }
                    }
                    for (a, i) in a.iter_mut().zip(idx) {
                        *a += t.values[t.value_of[i] as usize];
                    }
                }
                for (a, x) in a_chunks
                    .into_remainder()
                    .iter_mut()
                    .zip(x_chunks.remainder())
                {
                    *a += t.values[t.leaf_offset(x)];
                }
            } else {
                for (a, x) in acc.chunks_exact_mut(w).zip(inputs) {
                    let off = t.leaf_offset(x);
                    a.iter_mut()
                        .zip(&t.values[off..off + w])
                        .for_each(|(a, v)| *a += v);
                }
            }
        }
        let m = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= m);
        acc
    }
}

impl Predictor for Forest {
    fn predict(&self, x: &[f64]) -> Label {
        row_to_label(self.predict_row(x), &self.template)
    }

    fn predict_batch(&self, inputs: &[Vec<f64>]) -> Vec<Label> {
        self.predict_rows(inputs)
            .chunks_exact(self.width)
            .map(|r| row_to_label(r.to_vec(), &self.template))
            .collect()
    }
}
