//! Feature maps applied to inputs before the loss: coordinate selection,
//! RBF-Nyström features and the frozen ELM hidden layer.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::linalg::inv_sqrt_psd;
use crate::rng::rng_from_seed;

pub const DEFAULT_NYSTROM_JITTER: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    Identity,
    /// Keep only the listed input coordinates.
    Select(Vec<usize>),
    RbfNystrom(Nystrom),
    ElmHidden(ElmHidden),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nystrom {
    pub landmarks: Vec<Vec<f64>>,
    pub bandwidth: f64,
    /// `(K_mm + jitter·I)^(-1/2)`
    pub whitening: DMatrix<f64>,
}

/// Frozen hidden layer `h(x) = sigmoid(W·z + b)` with `z = (x − shift) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElmHidden {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureMap {
    pub fn output_dim(&self, input_dim: usize) -> usize {
        match self {
            FeatureMap::Identity => input_dim,
            FeatureMap::Select(idx) => idx.len(),
            FeatureMap::RbfNystrom(n) => n.landmarks.len(),
            FeatureMap::ElmHidden(e) => e.w.nrows(),
        }
    }

    pub fn check_input(&self, input_dim: usize) -> Result<()> {
        let ok = match self {
            FeatureMap::Identity => true,
            FeatureMap::Select(idx) => idx.iter().all(|&i| i < input_dim),
            FeatureMap::RbfNystrom(n) => n.landmarks.first().is_none_or(|l| l.len() == input_dim),
            FeatureMap::ElmHidden(e) => e.w.ncols() == input_dim,
        };
        if ok {
            Ok(())
        } else {
            invalid(format!(
                "feature map incompatible with input dimension {input_dim}"
            ))
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            FeatureMap::Identity => x.to_vec(),
            FeatureMap::Select(idx) => idx.iter().map(|&i| x[i]).collect(),
            FeatureMap::RbfNystrom(n) => n.transform(x),
            FeatureMap::ElmHidden(e) => e.transform(x),
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn rbf_kernel(a: &[f64], b: &[f64], bandwidth: f64) -> f64 {
    (-sq_dist(a, b) / (2.0 * bandwidth * bandwidth)).exp()
}

/// Median pairwise Euclidean distance (over at most 1000 leading points).
pub fn median_heuristic(points: &[Vec<f64>]) -> f64 {
    let pts = &points[..points.len().min(1000)];
    let mut d = Vec::with_capacity(pts.len() * pts.len().saturating_sub(1) / 2);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d.push(sq_dist(&pts[i], &pts[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if *m > 0.0 {
        *m
    } else {
        1.0
    }
}

impl Nystrom {
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let k = DVector::from_iterator(
            self.landmarks.len(),
            self.landmarks
                .iter()
                .map(|l| rbf_kernel(x, l, self.bandwidth)),
        );
        (&self.whitening * k).iter().copied().collect()
    }
}

/// Sample `m` landmarks without replacement and build the whitened RBF map.
/// `bandwidth = None` selects the median heuristic over `points`.
pub fn fit_rbf_nystrom(
    points: &[Vec<f64>],
    m: usize,
    bandwidth: Option<f64>,
    jitter: f64,
    seed: u64,
) -> Result<FeatureMap> {
    if m == 0 || m > points.len() {
        return invalid(format!(
            "need 1 <= m <= {} landmarks, got {m}",
            points.len()
        ));
    }
    let bw = bandwidth.unwrap_or_else(|| median_heuristic(points));
    if !(bw > 0.0) {
        return invalid("bandwidth must be positive");
    }
    let mut rng = rng_from_seed(seed);
    let mut idx = sample(&mut rng, points.len(), m).into_vec();
    idx.sort_unstable();
    let landmarks: Vec<Vec<f64>> = idx.iter().map(|&i| points[i].clone()).collect();
    Ok(FeatureMap::RbfNystrom(nystrom_from_landmarks(
        landmarks, bw, jitter,
    )?))
}

pub fn nystrom_from_landmarks(
    landmarks: Vec<Vec<f64>>,
    bandwidth: f64,
    jitter: f64,
) -> Result<Nystrom> {
    let m = landmarks.len();
    let kmm = DMatrix::from_fn(m, m, |i, j| {
        rbf_kernel(&landmarks[i], &landmarks[j], bandwidth)
    }) + DMatrix::identity(m, m) * jitter;
    if jitter <= 0.0 && kmm.clone().cholesky().is_none() {
        return Err(crate::Error::Numeric(
            "singular landmark kernel matrix".into(),
        ));
    }
    let floor = if jitter > 0.0 {
        jitter
    } else {
        f64::MIN_POSITIVE
    };
    Ok(Nystrom {
        landmarks,
        bandwidth,
        whitening: inv_sqrt_psd(&kmm, floor),
    })
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl ElmHidden {
    /// Hidden layer with given weights and no input standardization.
    pub fn new(w: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if w.nrows() != b.len() {
            return invalid("W rows must match b length");
        }
        let d = w.ncols();
        Ok(Self {
            w,
            b,
            shift: vec![0.0; d],
            scale: vec![1.0; d],
        })
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let z = DVector::from_iterator(
            x.len(),
            x.iter()
                .zip(&self.shift)
                .zip(&self.scale)
                .map(|((v, s), c)| (v - s) / c),
        );
        (&self.w * z + &self.b)
            .iter()
            .map(|&v| sigmoid(v))
            .collect()
    }
}

/// `h(x)` for an ELM hidden layer; errors if the map is not an ELM layer.
pub fn elm_features(x: &[f64], map: &FeatureMap) -> Result<Vec<f64>> {
    match map {
        FeatureMap::ElmHidden(e) if e.w.ncols() == x.len() => Ok(e.transform(x)),
        FeatureMap::ElmHidden(_) => invalid("input dimension does not match W"),
        _ => invalid("not an ELM hidden-layer map"),
    }
}

/// Random ELM layer: `W ~ N(0,1)`, `b ~ U(−1,1)`, inputs standardized with the
/// per-coordinate mean and standard deviation of `points`.
pub fn fit_elm_hidden(points: &[Vec<f64>], p: usize, seed: u64) -> Result<FeatureMap> {
    let Some(first) = points.first() else {
        return invalid("no points to fit ELM standardization");
    };
    let d = first.len();
    let mut rng = rng_from_seed(seed);
    let w = DMatrix::from_fn(p, d, |_, _| StandardNormal.sample(&mut rng));
    let b = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
    let n = points.len() as f64;
    let shift: Vec<f64> = (0..d)
        .map(|j| points.iter().map(|x| x[j]).sum::<f64>() / n)
        .collect();
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            let v = points
                .iter()
                .map(|x| (x[j] - shift[j]).powi(2))
                .sum::<f64>()
                / n;
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    Ok(FeatureMap::ElmHidden(ElmHidden { w, b, shift, scale }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn single_landmark_maps_itself_to_one() {
        let pts = vec![vec![0.3, -1.2]];
        let map = fit_rbf_nystrom(&pts, 1, Some(0.7), 0.0, 0).unwrap();
        let psi = map.apply(&pts[0]);
        assert_eq!(psi.len(), 1);
        assert!((psi[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_rank_nystrom_reconstructs_kernel() {
        let pts = random_points(10, 3, 4);
        let jitter = 1e-8;
        let map = fit_rbf_nystrom(&pts, 10, Some(1.5), jitter, 1).unwrap();
        let feats: Vec<Vec<f64>> = pts.iter().map(|p| map.apply(p)).collect();
        let mut worst = 0.0_f64;
        for i in 0..10 {
            for j in 0..10 {
                let dot: f64 = feats[i].iter().zip(&feats[j]).map(|(a, b)| a * b).sum();
                worst = worst.max((dot - rbf_kernel(&pts[i], &pts[j], 1.5)).abs());
            }
        }
        assert!(worst <= 10.0 * jitter, "max error {worst}");
    }

    #[test]
    fn too_many_landmarks_rejected() {
        assert!(fit_rbf_nystrom(&random_points(3, 2, 0), 4, None, 1e-8, 0).is_err());
    }

    #[test]
    fn median_heuristic_of_collinear_points() {
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        // distances 1, 2, 3
        assert_eq!(median_heuristic(&pts), 2.0);
    }

    #[test]
    fn elm_zero_weights_give_half() {
        let e = ElmHidden::new(DMatrix::zeros(4, 3), DVector::zeros(4)).unwrap();
        let h = elm_features(&[1.0, -2.0, 5.0], &FeatureMap::ElmHidden(e)).unwrap();
        assert!(h.iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let e1 = ElmHidden::new(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1)).unwrap();
        assert_eq!(
            elm_features(&[0.0], &FeatureMap::ElmHidden(e1)).unwrap(),
            vec![0.5]
        );
    }

    #[test]
    fn elm_matches_direct_recomputation() {
        let pts = random_points(20, 3, 8);
        let map = fit_elm_hidden(&pts, 5, 9).unwrap();
        let FeatureMap::ElmHidden(e) = &map else {
            panic!()
        };
        let x = &pts[3];
        let h = elm_features(x, &map).unwrap();
        for (r, hr) in h.iter().enumerate() {
            let mut a = e.b[r];
            for (c, xc) in x.iter().enumerate() {
                a += e.w[(r, c)] * (xc - e.shift[c]) / e.scale[c];
            }
            assert!((hr - 1.0 / (1.0 + (-a).exp())).abs() < 1e-14);
        }
        assert!(elm_features(&[1.0], &map).is_err());
    }
}
