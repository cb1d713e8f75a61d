use std::io::Write as _;
use std::path::Path as FsPath;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    channel_from_paths, direction_cosines, optimal_beam, ArrayGeometry, Codebook, Environment,
    PathSet, C64,
};
use crate::datasets::{Label, LabeledDataset};
use crate::error::{invalid, Result};
use crate::labelers::{Labeler, MlpLabeler, MlpParams, Predictor, Trainer};

/// Values per path slot: `|α|`, `cos∠α`, `sin∠α`, `sinθ·sinφ`, `cosθ`
/// (departure direction only; the receiver has one antenna).
pub const CKM_SLOT_WIDTH: usize = 5;

/// Fixed-length regression target for a path set: the strongest `slots`
/// paths, zero-padded.
pub fn ckm_target(z: &PathSet, slots: usize) -> Vec<f64> {
    let mut t = vec![0.0; slots * CKM_SLOT_WIDTH];
    for (l, p) in z.paths().iter().take(slots).enumerate() {
        let (u, v) = direction_cosines(p.theta_aod, p.phi_aod);
        let a = p.gain.norm();
        let (c, s) = if a > 0.0 {
            (p.gain.re / a, p.gain.im / a)
        } else {
            (0.0, 0.0)
        };
        t[l * CKM_SLOT_WIDTH..(l + 1) * CKM_SLOT_WIDTH].copy_from_slice(&[a, c, s, u, v]);
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CkmParams {
    pub slots: usize,
    pub mlp: MlpParams,
}

impl Default for CkmParams {
    fn default() -> Self {
        Self {
            slots: 3,
            mlp: MlpParams {
                hidden: vec![32, 32],
                epochs: 60,
                learning_rate: 1e-2,
                ..MlpParams::default()
            },
        }
    }
}

/// `f(x) = g(c(x))`: a map `c` from position to path slots, followed by
/// channel synthesis and exhaustive beam selection.
#[derive(Debug, Clone)]
pub struct CkmLabeler {
    c: Labeler,
    geom: ArrayGeometry,
    tx: Arc<Codebook>,
    rx: Arc<Codebook>,
    slots: usize,
}

impl CkmLabeler {
    pub fn new(
        c: Labeler,
        geom: ArrayGeometry,
        tx: Arc<Codebook>,
        rx: Arc<Codebook>,
        slots: usize,
    ) -> Result<Self> {
        geom.validate()?;
        if geom.rx.elements() != 1 || rx.dim() != 1 {
            return invalid("the CKM labeler models a single receive antenna");
        }
        if tx.dim() != geom.tx.elements() {
            return invalid("transmit codebook does not match the array");
        }
        if slots == 0 {
            return invalid("at least one path slot is required");
        }
        Ok(Self {
            c,
            geom,
            tx,
            rx,
            slots,
        })
    }

    /// Channel rebuilt from a slot vector.
    pub fn synthesize(&self, slots: &[f64]) -> DMatrix<C64> {
        let mut h = DMatrix::<C64>::zeros(self.geom.tx.elements(), 1);
        for s in slots.chunks_exact(CKM_SLOT_WIDTH).take(self.slots) {
            let &[a, c, sn, u, v] = s else { unreachable!() };
            if !(a > 0.0) {
                continue;
            }
            let g = C64::from_polar(a, sn.atan2(c));
            for (i, e) in self
                .geom
                .tx
                .response_uv(u.clamp(-1.0, 1.0), v.clamp(-1.0, 1.0))
                .iter()
                .enumerate()
            {
                h[(i, 0)] += g * e;
            }
        }
        h
    }
}

impl Predictor for CkmLabeler {
    fn predict(&self, x: &[f64]) -> Label {
        let slots = match self.c.predict(x) {
            Label::Vector(v) => v,
            Label::Scalar(s) => vec![s],
            _ => Vec::new(),
        };
        let h = self.synthesize(&slots);
        Label::Class(optimal_beam(&h, &self.tx, &self.rx).expect("shapes checked at construction"))
    }
}

/// Fit the position-to-paths regressor on `(X, Z)` records and wrap it.
pub fn ckm_labeler_fit(
    records: &[(Vec<f64>, PathSet)],
    geom: &ArrayGeometry,
    tx: Arc<Codebook>,
    rx: Arc<Codebook>,
    params: &CkmParams,
    seed: u64,
) -> Result<Labeler> {
    if records.is_empty() {
        return invalid("no CKM records");
    }
    let data = LabeledDataset::new(
        records.iter().map(|(x, _)| x.clone()).collect(),
        records
            .iter()
            .map(|(_, z)| Label::Vector(ckm_target(z, params.slots)))
            .collect(),
    )?;
    let c = Labeler::new(MlpLabeler::fit(&data, &params.mlp, seed)?);
    Ok(Labeler::new(CkmLabeler::new(
        c,
        *geom,
        tx,
        rx,
        params.slots,
    )?))
}

/// Trains CKM labelers on labeled positions, reading their path sets from
/// the environment.
#[derive(Debug, Clone)]
pub struct CkmTrainer {
    pub env: Arc<Environment>,
    pub geom: ArrayGeometry,
    pub tx: Arc<Codebook>,
    pub rx: Arc<Codebook>,
    pub params: CkmParams,
}

impl Trainer for CkmTrainer {
    fn fit_subset(&self, data: &LabeledDataset, indices: &[usize], seed: u64) -> Result<Labeler> {
        let records = indices
            .iter()
            .map(|&i| Ok((data.input(i).to_vec(), self.env.paths(data.input(i))?)))
            .collect::<Result<Vec<_>>>()?;
        ckm_labeler_fit(
            &records,
            &self.geom,
            self.tx.clone(),
            self.rx.clone(),
            &self.params,
            seed,
        )
    }
}

/// Positions labeled with their optimal beam pair; `J = |U|·|W|` classes.
pub fn beam_dataset(
    env: &Environment,
    geom: &ArrayGeometry,
    tx: &Codebook,
    rx: &Codebook,
    positions: &[Vec<f64>],
) -> Result<LabeledDataset> {
    let labels = positions
        .par_iter()
        .map(|x| optimal_beam(&channel_from_paths(&env.paths(x)?, geom)?, tx, rx))
        .collect::<Result<Vec<usize>>>()?;
    LabeledDataset::with_classes(positions.to_vec(), labels, tx.len() * rx.len())
}

/// `x,y,z,label` rows.
pub fn write_beam_csv(data: &LabeledDataset, path: impl AsRef<FsPath>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "x,y,z,label")?;
    for (x, y) in data.inputs().iter().zip(data.labels()) {
        let Label::Class(c) = y else {
            return invalid("beam datasets carry class labels");
        };
        if x.len() != 3 {
            return invalid("beam positions are 3-dimensional");
        }
        writeln!(out, "{},{},{},{c}", x[0], x[1], x[2])?;
    }
    out.flush()?;
    Ok(())
}
