use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Path, PathSet, C64};
use crate::error::{invalid, Result};
use crate::rng::{derive_seed, rng_from_seed, SeedTag};

/// Axis-aligned box of user positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: [f64; 2],
}

impl Default for Region {
    fn default() -> Self {
        Self {
            x: [10.0, 60.0],
            y: [-30.0, 30.0],
            z: [1.5, 1.5],
        }
    }
}

impl Region {
    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in [self.x, self.y, self.z].map(|r| (r[0], r[1])) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return invalid("region bounds must be finite with lo <= hi");
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut crate::rng::Rng) -> [f64; 3] {
        let pick = |rng: &mut crate::rng::Rng, r: [f64; 2]| {
            if r[1] > r[0] {
                rng.random_range(r[0]..r[1])
            } else {
                r[0]
            }
        };
        [pick(rng, self.x), pick(rng, self.y), pick(rng, self.z)]
    }
}

/// Base station, point scatterers and the deterministic map from a user
/// position to its paths: line of sight plus the strongest single bounces.
/// Path amplitude is `ref_distance / length` (times `reflection` per
/// bounce) with a pseudo-random phase keyed by the quantized position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub bs: [f64; 3],
    pub scatterers: Vec<[f64; 3]>,
    pub region: Region,
    pub l_max: usize,
    pub wavelength: f64,
    pub reflection: f64,
    pub ref_distance: f64,
    pub seed: u64,
}

pub const DEFAULT_BS: [f64; 3] = [0.0, 0.0, 10.0];
/// 28 GHz.
pub const DEFAULT_WAVELENGTH: f64 = 0.0107;
const SCATTERER_HEIGHT: [f64; 2] = [0.0, 15.0];
const POSITION_QUANTUM: f64 = 1e-6;

/// Scatterers uniform over the region footprint at heights in `[0, 15]`.
pub fn gen_environment(
    region: Region,
    scatterer_count: usize,
    l_max: usize,
    seed: u64,
) -> Result<Environment> {
    region.validate()?;
    if l_max == 0 {
        return invalid("l_max must be at least 1");
    }
    let mut rng = rng_from_seed(derive_seed(seed, &["scatterers".into()]));
    let foot = Region {
        z: SCATTERER_HEIGHT,
        ..region
    };
    let scatterers = (0..scatterer_count)
        .map(|_| foot.sample(&mut rng))
        .collect();
    Ok(Environment {
        bs: DEFAULT_BS,
        scatterers,
        region,
        l_max,
        wavelength: DEFAULT_WAVELENGTH,
        reflection: 0.3,
        ref_distance: 10.0,
        seed,
    })
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Zenith and azimuth of `v`.
fn angles(v: &[f64; 3]) -> (f64, f64) {
    let r = norm(v);
    ((v[2] / r).clamp(-1.0, 1.0).acos(), v[1].atan2(v[0]))
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        self.region.validate()?;
        if self.l_max == 0
            || !(self.wavelength > 0.0)
            || !(self.ref_distance > 0.0)
            || !(self.reflection >= 0.0)
        {
            return invalid("environment parameters out of range");
        }
        Ok(())
    }

    pub fn sample_positions(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        (0..count)
            .map(|_| self.region.sample(&mut rng).to_vec())
            .collect()
    }

    /// Paths seen at position `x` (length 3), sorted by nonincreasing `|α|`.
    pub fn paths(&self, x: &[f64]) -> Result<PathSet> {
        let &[x0, x1, x2] = x else {
            return invalid(format!("positions are 3-dimensional, got {}", x.len()));
        };
        let ue = [x0, x1, x2];
        let los = sub(&ue, &self.bs);
        let dist = norm(&los);
        if !(dist > 1e-9) {
            return invalid("user position coincides with the base station");
        }
        let q = |c: f64| (c / POSITION_QUANTUM).round() as i64 as u64;
        let key = derive_seed(
            self.seed,
            &[
                "phase".into(),
                SeedTag::U64(q(x0)),
                SeedTag::U64(q(x1)),
                SeedTag::U64(q(x2)),
            ],
        );
        let mut rng = rng_from_seed(key);
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut phase = || rng.random::<f64>() * two_pi;

        let (t_d, p_d) = angles(&los);
        let (t_a, p_a) = angles(&sub(&self.bs, &ue));
        let mut paths = vec![Path {
            gain: C64::from_polar(self.ref_distance / dist, phase()),
            theta_aod: t_d,
            phi_aod: p_d,
            theta_aoa: t_a,
            phi_aoa: p_a,
        }];
        let mut bounces: Vec<(usize, Path)> = Vec::with_capacity(self.scatterers.len());
        for (i, s) in self.scatterers.iter().enumerate() {
            let ph = phase();
            let out = sub(s, &self.bs);
            let back = sub(s, &ue);
            let (d1, d2) = (norm(&out), norm(&back));
            if d1 < 1e-9 || d2 < 1e-9 {
                continue;
            }
            let (t_d, p_d) = angles(&out);
            let (t_a, p_a) = angles(&back);
            bounces.push((
                i,
                Path {
                    gain: C64::from_polar(self.reflection * self.ref_distance / (d1 + d2), ph),
                    theta_aod: t_d,
                    phi_aod: p_d,
                    theta_aoa: t_a,
                    phi_aoa: p_a,
                },
            ));
        }
        bounces.sort_by(|a, b| {
            b.1.gain
                .norm()
                .total_cmp(&a.1.gain.norm())
                .then(a.0.cmp(&b.0))
        });
        paths.extend(bounces.into_iter().take(self.l_max - 1).map(|(_, p)| p));
        paths.sort_by(|a, b| b.gain.norm().total_cmp(&a.gain.norm()));
        PathSet::new(paths)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let env: Self = serde_json::from_str(s)?;
        env.validate()?;
        Ok(env)
    }
}
