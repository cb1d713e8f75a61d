use rand_distr::{Distribution, Normal, StandardNormal};

use super::{LabeledDataset, UnlabeledDataset};
use crate::error::{invalid, Result};
use crate::rng::rng_from_seed;

/// Parameters of the linear-Gaussian model `Y = μ + Xᵀβ + z`,
/// `X ~ N(0, I_d)`, `β = (Rσ/√2)·1_d`, `z ~ N(0, σ²(1 − R²))`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthParams {
    pub d: usize,
    pub mu: f64,
    pub sigma: f64,
    /// Explained-correlation parameter `R ∈ [0, 1]`.
    pub r: f64,
    pub seed: u64,
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.r) {
            return invalid(format!("R must lie in [0,1], got {}", self.r));
        }
        if !(self.sigma > 0.0) {
            return invalid(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.d == 0 {
            return invalid("d must be positive");
        }
        Ok(())
    }

    /// Common coefficient value `Rσ/√2` (applied to every coordinate, for any `d`).
    pub fn beta_coefficient(&self) -> f64 {
        self.r * self.sigma / std::f64::consts::SQRT_2
    }

    pub fn beta(&self) -> Vec<f64> {
        vec![self.beta_coefficient(); self.d]
    }

    pub fn noise_std(&self) -> f64 {
        self.sigma * (1.0 - self.r * self.r).max(0.0).sqrt()
    }

    /// `Var(Y) = d·β² + σ²(1 − R²)`.
    pub fn label_variance(&self) -> f64 {
        let b = self.beta_coefficient();
        self.d as f64 * b * b + self.noise_std().powi(2)
    }
}

/// Draw `n` labeled pairs followed by `N` unlabeled inputs from one seeded stream.
pub fn gen_synthetic(
    p: &SynthParams,
    n: usize,
    big_n: usize,
) -> Result<(LabeledDataset, UnlabeledDataset)> {
    p.validate()?;
    if n == 0 || big_n == 0 {
        return invalid("n and N must be at least 1");
    }
    let mut rng = rng_from_seed(p.seed);
    let noise = Normal::new(0.0, p.noise_std())
        .map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
    let b = p.beta_coefficient();
    let draw_x = |rng: &mut crate::rng::Rng| -> Vec<f64> {
        (0..p.d).map(|_| StandardNormal.sample(rng)).collect()
    };
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x = draw_x(&mut rng);
        let y = p.mu + b * x.iter().sum::<f64>() + noise.sample(&mut rng);
        inputs.push(x);
        labels.push(y);
    }
    let unlabeled: Vec<Vec<f64>> = (0..big_n).map(|_| draw_x(&mut rng)).collect();
    Ok((
        LabeledDataset::scalar(inputs, labels)?,
        UnlabeledDataset::new(unlabeled)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(r: f64, seed: u64) -> SynthParams {
        SynthParams {
            d: 2,
            mu: 4.0,
            sigma: 2.0,
            r,
            seed,
        }
    }

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (
            m,
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0),
        )
    }

    #[test]
    fn invalid_r_rejected() {
        assert!(gen_synthetic(&params(1.5, 0), 10, 10).is_err());
        let mut p = params(0.5, 0);
        p.sigma = 0.0;
        assert!(gen_synthetic(&p, 10, 10).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let a = gen_synthetic(&params(0.5, 11), 50, 20).unwrap();
        let b = gen_synthetic(&params(0.5, 11), 50, 20).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn moments_at_one_million() {
        let n = 1_000_000;
        let p = params(0.5, 2024);
        let (lab, _) = gen_synthetic(&p, n, 1).unwrap();
        let y = lab.scalar_labels().unwrap();
        let (m, v) = mean_var(&y);
        assert!(
            (m - p.mu).abs() <= 5.0 * p.sigma / (n as f64).sqrt(),
            "mean {m}"
        );
        assert!((v / (p.sigma * p.sigma) - 1.0).abs() <= 0.02, "var {v}");
        // explained fraction Var(Xᵀβ)/Var(Y) ≈ R² = 0.25 at d = 2
        let b = p.beta_coefficient();
        let lin: Vec<f64> = lab.inputs().iter().map(|x| b * (x[0] + x[1])).collect();
        let (_, vl) = mean_var(&lin);
        assert!((vl / v - 0.25).abs() <= 0.01, "explained {}", vl / v);
    }

    #[test]
    fn r_zero_decorrelates() {
        let (lab, _) = gen_synthetic(&params(0.0, 5), 200_000, 1).unwrap();
        let y = lab.scalar_labels().unwrap();
        let (my, vy) = mean_var(&y);
        let x0: Vec<f64> = lab.inputs().iter().map(|x| x[0]).collect();
        let (mx, vx) = mean_var(&x0);
        let cov = y
            .iter()
            .zip(&x0)
            .map(|(a, b)| (a - my) * (b - mx))
            .sum::<f64>()
            / (y.len() as f64 - 1.0);
        assert!((cov / (vx * vy).sqrt()).abs() < 0.01);
        assert!((vy / 4.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn variance_formula_at_d3() {
        let p = SynthParams {
            d: 3,
            mu: 0.0,
            sigma: 2.0,
            r: 0.5,
            seed: 0,
        };
        // 1.5 R²σ² + σ²(1 − R²)
        assert!((p.label_variance() - (1.5 * 0.25 * 4.0 + 4.0 * 0.75)).abs() < 1e-12);
    }
}
