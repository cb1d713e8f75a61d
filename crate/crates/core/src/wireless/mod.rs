//! mmWave beam alignment: multipath channels on a uniform planar array,
//! Kronecker codebooks, exhaustive beam selection and a CKM labeler.

mod ckm;
mod env;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use ckm::{
    beam_dataset, ckm_labeler_fit, ckm_target, write_beam_csv, CkmLabeler, CkmParams, CkmTrainer,
    CKM_SLOT_WIDTH,
};
pub use env::{gen_environment, Environment, Region};

pub type C64 = Complex64;

/// One propagation path. Angles are zenith `θ ∈ [0, π]` and azimuth
/// `φ ∈ [−π, π]`, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub gain: C64,
    pub theta_aod: f64,
    pub phi_aod: f64,
    pub theta_aoa: f64,
    pub phi_aoa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    paths: Vec<Path>,
}

impl PathSet {
    pub fn new(paths: Vec<Path>) -> Result<Self> {
        if paths.is_empty() {
            return invalid("a path set needs at least one path");
        }
        let pi = std::f64::consts::PI;
        for (i, p) in paths.iter().enumerate() {
            let zen_ok = |t: f64| (0.0..=pi).contains(&t);
            let az_ok = |a: f64| (-pi..=pi).contains(&a);
            if !(zen_ok(p.theta_aod) && zen_ok(p.theta_aoa) && az_ok(p.phi_aod) && az_ok(p.phi_aoa))
            {
                return invalid(format!("path {i} has angles out of range"));
            }
            if !(p.gain.re.is_finite() && p.gain.im.is_finite()) {
                return invalid(format!("path {i} has a non-finite gain"));
            }
        }
        Ok(Self { paths })
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// `N_y × N_z` uniform planar array in the y-z plane, spacing in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Upa {
    pub ny: usize,
    pub nz: usize,
    pub spacing: f64,
}

impl Upa {
    pub fn new(ny: usize, nz: usize, spacing: f64) -> Result<Self> {
        let u = Self { ny, nz, spacing };
        u.validate()?;
        Ok(u)
    }

    pub fn single() -> Self {
        Self {
            ny: 1,
            nz: 1,
            spacing: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ny == 0 || self.nz == 0 {
            return invalid("array dimensions must be at least 1");
        }
        if !(self.spacing > 0.0) {
            return invalid("element spacing must be positive");
        }
        Ok(())
    }

    pub fn elements(&self) -> usize {
        self.ny * self.nz
    }

    /// Unit-norm response at direction cosines `(u, v) = (sinθ·sinφ, cosθ)`.
    /// Element `(iy, iz)` sits at index `iy·N_z + iz`.
    pub fn response_uv(&self, u: f64, v: f64) -> Vec<C64> {
        kron(
            &linear_response(self.ny, self.spacing, u),
            &linear_response(self.nz, self.spacing, v),
        )
    }

    pub fn response(&self, theta: f64, phi: f64) -> Vec<C64> {
        let (u, v) = direction_cosines(theta, phi);
        self.response_uv(u, v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub tx: Upa,
    pub rx: Upa,
}

impl ArrayGeometry {
    /// Transmit UPA and a single-antenna receiver.
    pub fn tx_only(ny: usize, nz: usize, spacing: f64) -> Result<Self> {
        Ok(Self {
            tx: Upa::new(ny, nz, spacing)?,
            rx: Upa::single(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.tx.validate()?;
        self.rx.validate()
    }
}

pub fn direction_cosines(theta: f64, phi: f64) -> (f64, f64) {
    (theta.sin() * phi.sin(), theta.cos())
}

/// `exp(j2π·spacing·k·s)/√n` for `k = 0..n`.
pub fn linear_response(n: usize, spacing: f64, s: f64) -> Vec<C64> {
    let norm = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|k| C64::from_polar(norm, 2.0 * std::f64::consts::PI * spacing * k as f64 * s))
        .collect()
}

pub fn kron(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter()
        .flat_map(|&x| b.iter().map(move |&y| x * y))
        .collect()
}

/// `H = Σ_l α_l · a_tx(AoD_l) · a_rx(AoA_l)ᴴ`, of shape `N_tx × N_rx`.
pub fn channel_from_paths(z: &PathSet, geom: &ArrayGeometry) -> Result<DMatrix<C64>> {
    geom.validate()?;
    let (nt, nr) = (geom.tx.elements(), geom.rx.elements());
    let mut h = DMatrix::<C64>::zeros(nt, nr);
    for p in z.paths() {
        let at = geom.tx.response(p.theta_aod, p.phi_aod);
        let ar = geom.rx.response(p.theta_aoa, p.phi_aoa);
        for (i, a) in at.iter().enumerate() {
            let ga = p.gain * a;
            for (j, b) in ar.iter().enumerate() {
                h[(i, j)] += ga * b.conj();
            }
        }
    }
    Ok(h)
}

/// Fixed list of unit-norm beams.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    beams: Vec<Vec<C64>>,
    /// Grid of `u = sinθ·sinφ` values (y axis) and `v = cosθ` values (z axis).
    pub u_grid: Vec<f64>,
    pub v_grid: Vec<f64>,
}

impl Codebook {
    pub fn from_beams(beams: Vec<Vec<C64>>) -> Result<Self> {
        let Some(dim) = beams.first().map(Vec::len) else {
            return invalid("a codebook needs at least one beam");
        };
        if dim == 0 || beams.iter().any(|b| b.len() != dim) {
            return invalid("codebook beams must share a positive dimension");
        }
        let beams = beams
            .into_iter()
            .map(|b| {
                let nrm = b.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                if nrm > 0.0 {
                    Ok(b.into_iter().map(|c| c / nrm).collect())
                } else {
                    invalid("zero beam in codebook")
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            beams,
            u_grid: Vec::new(),
            v_grid: Vec::new(),
        })
    }

    /// Single-beam codebook for a one-antenna side.
    pub fn trivial() -> Self {
        Self {
            beams: vec![vec![C64::new(1.0, 0.0)]],
            u_grid: Vec::new(),
            v_grid: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.beams[0].len()
    }

    pub fn beam(&self, i: usize) -> &[C64] {
        &self.beams[i]
    }

    pub fn beams(&self) -> &[Vec<C64>] {
        &self.beams
    }
}

/// Uniform grid of `2n` points over `[−1, 1)`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..2 * n).map(|i| -1.0 + i as f64 / n as f64).collect()
}

/// Kronecker codebook: y responses at the `2N_y` grid points of `u` times z
/// responses at the `2N_z` grid points of `v`, both over `[−1, 1)`. Beam
/// `(i_u, i_v)` has index `i_u·2N_z + i_v`. With half-wavelength spacing the
/// normalized spatial frequency `spacing·u` advances by `1/(2N_y)`.
pub fn make_upa_codebook(ny: usize, nz: usize, spacing: f64) -> Result<Codebook> {
    let upa = Upa::new(ny, nz, spacing)?;
    let (ug, vg) = (uniform_grid(ny), uniform_grid(nz));
    let mut beams = Vec::with_capacity(ug.len() * vg.len());
    for &u in &ug {
        for &v in &vg {
            beams.push(upa.response_uv(u, v));
        }
    }
    Ok(Codebook {
        beams,
        u_grid: ug,
        v_grid: vg,
    })
}

/// `|uᴴ H w|²`.
pub fn beam_gain(h: &DMatrix<C64>, u: &[C64], w: &[C64]) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for (j, wj) in w.iter().enumerate() {
        let mut col = C64::new(0.0, 0.0);
        for (i, ui) in u.iter().enumerate() {
            col += ui.conj() * h[(i, j)];
        }
        acc += col * wj;
    }
    acc.norm_sqr()
}

fn check_shapes(h: &DMatrix<C64>, tx: &Codebook, rx: &Codebook) -> Result<()> {
    if h.nrows() != tx.dim() || h.ncols() != rx.dim() {
        return invalid(format!(
            "channel is {}x{} but codebooks have dimensions {} and {}",
            h.nrows(),
            h.ncols(),
            tx.dim(),
            rx.dim()
        ));
    }
    Ok(())
}

/// Pair index `i_u·|W| + i_w` maximizing `|u_iᴴ H w_i|²`; lowest index on ties.
pub fn optimal_beam(h: &DMatrix<C64>, tx: &Codebook, rx: &Codebook) -> Result<usize> {
    check_shapes(h, tx, rx)?;
    let mut best = (0, f64::NEG_INFINITY);
    for (iu, u) in tx.beams().iter().enumerate() {
        for (iw, w) in rx.beams().iter().enumerate() {
            let g = beam_gain(h, u, w);
            if g > best.1 {
                best = (iu * rx.len() + iw, g);
            }
        }
    }
    Ok(best.0)
}

/// Beams of pair index `j`.
pub fn pair<'a>(tx: &'a Codebook, rx: &'a Codebook, j: usize) -> Result<(&'a [C64], &'a [C64])> {
    if j >= tx.len() * rx.len() {
        return invalid(format!("pair index {j} out of range"));
    }
    Ok((tx.beam(j / rx.len()), rx.beam(j % rx.len())))
}

/// `log₂(1 + P·|uᴴHw|²/σ²)` in bps/Hz.
pub fn capacity(h: &DMatrix<C64>, u: &[C64], w: &[C64], power: f64, noise_var: f64) -> Result<f64> {
    if u.len() != h.nrows() || w.len() != h.ncols() {
        return invalid("beam dimensions do not match the channel");
    }
    if !(power >= 0.0) || !(noise_var > 0.0) {
        return invalid("power must be nonnegative and noise variance positive");
    }
    Ok((1.0 + power * beam_gain(h, u, w) / noise_var).log2())
}
