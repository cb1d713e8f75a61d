//! Experiment configuration: flat dotted JSON keys laid over per-experiment
//! defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::datasets::{Area, PathLossModel};
use crate::error::{Error, Result};
use crate::labelers::{Activation, ForestParams, LabelerKind, LabelerSpec, MlpParams};
use crate::meta::BatchLossConfig;
use crate::wireless::Region;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SynthMean,
    SynthLinreg,
    BeamAlign,
    BeamAlignNn,
    McppiBeam,
    Localize,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        Self::SynthMean,
        Self::SynthLinreg,
        Self::BeamAlign,
        Self::BeamAlignNn,
        Self::McppiBeam,
        Self::Localize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SynthMean => "synth-mean",
            Self::SynthLinreg => "synth-linreg",
            Self::BeamAlign => "beam-align",
            Self::BeamAlignNn => "beam-align-nn",
            Self::McppiBeam => "mcppi-beam",
            Self::Localize => "localize",
        }
    }

    pub fn is_synthetic(self) -> bool {
        matches!(self, Self::SynthMean | Self::SynthLinreg)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SchemeName {
    #[serde(rename = "ERM")]
    Erm,
    #[serde(rename = "SS")]
    Ss,
    #[serde(rename = "PPI")]
    Ppi,
    #[serde(rename = "TunedPPI")]
    TunedPpi,
    #[serde(rename = "CPPI")]
    Cppi,
    #[serde(rename = "TunedCPPI")]
    TunedCppi,
    #[serde(rename = "PerfectCSI")]
    PerfectCsi,
    #[serde(rename = "MPL")]
    Mpl,
    #[serde(rename = "MCPPI")]
    Mcppi,
    #[serde(rename = "TunedCPPIBatch")]
    TunedCppiBatch,
}

impl SchemeName {
    pub fn name(self) -> &'static str {
        match self {
            Self::Erm => "ERM",
            Self::Ss => "SS",
            Self::Ppi => "PPI",
            Self::TunedPpi => "TunedPPI",
            Self::Cppi => "CPPI",
            Self::TunedCppi => "TunedCPPI",
            Self::PerfectCsi => "PerfectCSI",
            Self::Mpl => "MPL",
            Self::Mcppi => "MCPPI",
            Self::TunedCppiBatch => "TunedCPPIBatch",
        }
    }

    fn allowed(kind: ExperimentKind) -> &'static [SchemeName] {
        use SchemeName::*;
        match kind {
            ExperimentKind::SynthMean | ExperimentKind::SynthLinreg | ExperimentKind::Localize => {
                &[Erm, Ss, Ppi, TunedPpi, Cppi, TunedCppi]
            }
            ExperimentKind::BeamAlign => &[Erm, Ss, Ppi, TunedPpi, Cppi, TunedCppi, PerfectCsi],
            ExperimentKind::BeamAlignNn => &[Erm, Cppi, TunedCppi, PerfectCsi],
            ExperimentKind::McppiBeam => &[Erm, Mpl, Mcppi, TunedCppiBatch, PerfectCsi],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVar {
    #[serde(rename = "n")]
    Labeled,
    #[serde(rename = "N")]
    Unlabeled,
    #[serde(rename = "r2")]
    R2,
    /// Transmit array width `N_y`.
    #[serde(rename = "ny")]
    Antennas,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub var: SweepVar,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelerKindName {
    ConstantMean,
    Ridge,
    Knn,
    ForestLite,
    Mlp,
}

/// Labeler settings as flat keys; only those of the selected kind are used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelerConfig {
    pub kind: LabelerKindName,
    pub seed: u64,
    pub strength: f64,
    pub neighbors: usize,
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        let f = ForestParams::default();
        let m = MlpParams::default();
        Self {
            kind: LabelerKindName::ForestLite,
            seed: 0,
            strength: 1.0,
            neighbors: 5,
            trees: f.trees,
            max_depth: f.max_depth,
            min_leaf: f.min_leaf,
            mtry: f.mtry,
            bootstrap: f.bootstrap,
            hidden: m.hidden,
            activation: m.activation,
            epochs: m.epochs,
            learning_rate: m.learning_rate,
            batch_size: m.batch_size,
        }
    }
}

impl LabelerConfig {
    pub fn to_spec(&self) -> LabelerSpec {
        let kind = match self.kind {
            LabelerKindName::ConstantMean => LabelerKind::ConstantMean,
            LabelerKindName::Ridge => LabelerKind::Ridge {
                strength: self.strength,
            },
            LabelerKindName::Knn => LabelerKind::Knn { k: self.neighbors },
            LabelerKindName::ForestLite => LabelerKind::ForestLite(ForestParams {
                trees: self.trees,
                max_depth: self.max_depth,
                min_leaf: self.min_leaf,
                mtry: self.mtry,
                bootstrap: self.bootstrap,
            }),
            LabelerKindName::Mlp => LabelerKind::Mlp(MlpParams {
                hidden: self.hidden.clone(),
                activation: self.activation,
                epochs: self.epochs,
                learning_rate: self.learning_rate,
                batch_size: self.batch_size,
            }),
        };
        LabelerSpec::new(kind, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub d: usize,
    pub mu: f64,
    pub sigma: f64,
    /// Explained fraction `R²`; the generator takes `R = √R²`.
    pub r2: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            d: 2,
            mu: 4.0,
            sigma: 2.0,
            r2: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamConfig {
    pub ny: usize,
    pub nz: usize,
    pub spacing: f64,
    /// Share of all drawn positions held out for testing.
    pub test_fraction: f64,
    pub scatterers: usize,
    pub l_max: usize,
    pub region: Region,
    /// Nyström landmarks of the softmax location model.
    pub landmarks: usize,
    /// RBF bandwidth as a multiple of the median pairwise distance.
    pub bandwidth_scale: f64,
    /// Ridge strength of the softmax location model.
    pub softmax_gamma: f64,
    pub power: f64,
    pub noise_var: f64,
    pub ckm_slots: usize,
    pub ckm_hidden: Vec<usize>,
    pub ckm_epochs: usize,
    pub ckm_learning_rate: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            ny: 4,
            nz: 4,
            spacing: 0.5,
            test_fraction: 0.2,
            scatterers: 12,
            l_max: 3,
            region: Region::default(),
            landmarks: 64,
            bandwidth_scale: 0.25,
            softmax_gamma: 1e-3,
            power: 300.0,
            noise_var: 1.0,
            ckm_slots: 3,
            ckm_hidden: vec![32, 32],
            ckm_epochs: 60,
            ckm_learning_rate: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RssiConfig {
    pub aps: usize,
    pub area: Area,
    pub pathloss: PathLossModel,
    /// Share of all drawn fingerprints held out for testing.
    pub test_fraction: f64,
    /// ELM hidden units.
    pub hidden: usize,
    pub ridge: f64,
}

impl Default for RssiConfig {
    fn default() -> Self {
        Self {
            aps: 8,
            area: Area {
                x0: 0.0,
                y0: 0.0,
                x1: 50.0,
                y1: 50.0,
            },
            pathloss: PathLossModel {
                pl0: 40.0,
                alpha: 2.5,
                shadow_std: 4.0,
            },
            test_fraction: 0.2,
            hidden: 50,
            ridge: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub schemes: Vec<SchemeName>,
    pub sweep: SweepConfig,
    pub trials: usize,
    pub seed: u64,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "B")]
    pub b: usize,
    /// SS pseudo-label weight.
    pub gamma: f64,
    /// Fixed λ for the tuned schemes instead of λ̂.
    pub lambda: Option<f64>,
    pub lambda_init: f64,
    pub split_fraction: f64,
    pub labeler: LabelerConfig,
    pub synth: SynthConfig,
    pub beam: BeamConfig,
    pub rssi: RssiConfig,
    pub meta: BatchLossConfig,
    /// Output directory for results and plot data.
    pub out: Option<String>,
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        use SchemeName::*;
        let (schemes, grid, trials, n) = match kind {
            ExperimentKind::SynthMean | ExperimentKind::SynthLinreg => (
                vec![Erm, Ss, Ppi, TunedPpi, Cppi, TunedCppi],
                vec![100.0],
                300,
                100,
            ),
            ExperimentKind::BeamAlign => (
                vec![Erm, Cppi, TunedCppi, PerfectCsi],
                vec![50.0, 200.0],
                20,
                50,
            ),
            ExperimentKind::BeamAlignNn => {
                (vec![Erm, Cppi, TunedCppi, PerfectCsi], vec![200.0], 20, 200)
            }
            ExperimentKind::McppiBeam => (
                vec![Mpl, Mcppi, TunedCppiBatch, PerfectCsi],
                vec![200.0],
                20,
                200,
            ),
            ExperimentKind::Localize => (vec![Erm, Cppi, TunedCppi], vec![40.0], 20, 40),
        };
        let mut synth = SynthConfig::default();
        let mut labeler = LabelerConfig::default();
        if kind == ExperimentKind::SynthLinreg {
            synth.d = 3;
            synth.mu = 0.0;
        }
        if kind.is_synthetic() {
            // Fully grown trees.
            labeler.trees = 20;
            labeler.max_depth = 64;
            labeler.min_leaf = 1;
        }
        let big_n = match kind {
            ExperimentKind::SynthMean | ExperimentKind::SynthLinreg => 10_000,
            ExperimentKind::Localize => 800,
            _ => 750,
        };
        let meta = BatchLossConfig {
            total_steps: 300,
            batch_unlabeled: 64,
            ..BatchLossConfig::default()
        };
        Self {
            experiment: kind,
            schemes,
            sweep: SweepConfig {
                var: SweepVar::Labeled,
                grid,
            },
            trials,
            seed: 0,
            n,
            big_n,
            k: 5,
            b: 30,
            gamma: 1.0,
            lambda: None,
            lambda_init: 0.5,
            split_fraction: 0.5,
            labeler,
            synth,
            beam: BeamConfig::default(),
            rssi: RssiConfig::default(),
            meta,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.sweep.grid.is_empty() {
            return bad("sweep grid must not be empty".into());
        }
        if self.schemes.is_empty() {
            return bad("no schemes selected".into());
        }
        let allowed = SchemeName::allowed(self.experiment);
        if let Some(s) = self.schemes.iter().find(|s| !allowed.contains(s)) {
            return bad(format!(
                "scheme {} is not available for {}",
                s.name(),
                self.experiment
            ));
        }
        let mut seen = self.schemes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.schemes.len() {
            return bad("schemes must not repeat".into());
        }
        for &v in &self.sweep.grid {
            let ok = match self.sweep.var {
                SweepVar::Labeled | SweepVar::Unlabeled | SweepVar::Antennas => {
                    v >= 1.0 && v.fract() == 0.0
                }
                SweepVar::R2 => (0.0..=1.0).contains(&v),
            };
            if !ok {
                return bad(format!("invalid sweep value {v}"));
            }
        }
        if self.sweep.var == SweepVar::R2 && !self.experiment.is_synthetic() {
            return bad("r2 sweeps apply to synthetic experiments only".into());
        }
        if self.sweep.var == SweepVar::Antennas
            && !matches!(
                self.experiment,
                ExperimentKind::BeamAlign | ExperimentKind::BeamAlignNn | ExperimentKind::McppiBeam
            )
        {
            return bad("antenna sweeps apply to beam experiments only".into());
        }
        if self.k < 2 {
            return bad("K must be at least 2".into());
        }
        if self.b < 2 {
            return bad("B must be at least 2".into());
        }
        if !(self.gamma >= 0.0) {
            return bad("gamma must be nonnegative".into());
        }
        for l in self.lambda.iter().chain([&self.lambda_init]) {
            if !(0.0..=1.0).contains(l) {
                return bad(format!("lambda {l} outside [0, 1]"));
            }
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad("split_fraction must lie in (0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.synth.r2) || !(self.synth.sigma > 0.0) || self.synth.d == 0 {
            return bad("synth needs r2 in [0, 1], sigma > 0 and d >= 1".into());
        }
        for f in [self.beam.test_fraction, self.rssi.test_fraction] {
            if !(f > 0.0 && f < 1.0) {
                return bad("test_fraction must lie in (0, 1)".into());
            }
        }
        self.labeler
            .to_spec()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.meta
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Copy with the sweep variable set to `v`.
    pub fn at_sweep(&self, v: f64) -> Self {
        let mut c = self.clone();
        match self.sweep.var {
            SweepVar::Labeled => c.n = v as usize,
            SweepVar::Unlabeled => c.big_n = v as usize,
            SweepVar::R2 => c.synth.r2 = v,
            SweepVar::Antennas => c.beam.ny = v as usize,
        }
        c
    }

    /// Defaults for `kind` with `overrides` (flat dotted keys or nested
    /// objects) laid on top.
    pub fn from_overrides(
        kind: ExperimentKind,
        overrides: &BTreeMap<String, Value>,
    ) -> Result<Self> {
        let mut flat = flatten(&serde_json::to_value(Self::defaults(kind))?);
        for (k, v) in overrides {
            if k == "experiment" {
                let named = v.as_str().map(str::parse::<ExperimentKind>).transpose()?;
                if named != Some(kind) {
                    return Err(Error::Config(format!(
                        "config is for experiment {v}, not {kind}"
                    )));
                }
                continue;
            }
            let slot = flat
                .get_mut(k)
                .ok_or_else(|| Error::Config(format!("unknown config key `{k}`")))?;
            *slot = v.clone();
        }
        let cfg: Self = serde_json::from_value(unflatten(&flat)?)
            .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_flat_json(&self) -> Result<String> {
        let flat = flatten(&serde_json::to_value(self)?);
        let map: Map<String, Value> = flat.into_iter().collect();
        Ok(serde_json::to_string_pretty(&Value::Object(map))?)
    }
}

/// Read a JSON config file into flat keys.
pub fn read_overrides(path: impl AsRef<Path>) -> Result<BTreeMap<String, Value>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if !v.is_object() {
        return Err(Error::Config("config must be a JSON object".into()));
    }
    Ok(flatten(&v))
}

/// `key=value`; the value is parsed as JSON, falling back to a plain string.
pub fn parse_set(arg: &str) -> Result<(String, Value)> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected key=value, got `{arg}`")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(Error::Config(format!("empty key in `{arg}`")));
    }
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

/// Objects become dotted keys; arrays and scalars are leaves.
pub fn flatten(v: &Value) -> BTreeMap<String, Value> {
    fn walk(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
        match v {
            Value::Object(m) if !m.is_empty() || prefix.is_empty() => {
                for (k, child) in m {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&key, child, out);
                }
            }
            _ => {
                out.insert(prefix.to_string(), v.clone());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk("", v, &mut out);
    out
}

pub fn unflatten(flat: &BTreeMap<String, Value>) -> Result<Value> {
    let mut root = Map::new();
    for (key, v) in flat {
        let parts: Vec<&str> = key.split('.').collect();
        let mut node = &mut root;
        for p in &parts[..parts.len() - 1] {
            let entry = node
                .entry(p.to_string())
                .or_insert_with(|| Value::Object(Map::new()));
            node = entry
                .as_object_mut()
                .ok_or_else(|| Error::Config(format!("key `{key}` conflicts with a value")))?;
        }
        node.insert(parts[parts.len() - 1].to_string(), v.clone());
    }
    Ok(Value::Object(root))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn set(pairs: &[(&str, Value)]) -> BTreeMap<String, Value> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn defaults_validate_for_every_experiment() {
        for k in ExperimentKind::ALL {
            let c = ExperimentConfig::defaults(k);
            c.validate().unwrap();
            let trials = if k.is_synthetic() { 300 } else { 20 };
            assert_eq!(c.trials, trials, "{k}");
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
    }

    #[test]
    fn flat_keys_override_nested_fields() {
        let o = set(&[
            ("trials", json!(1)),
            ("synth.r2", json!(0.25)),
            ("labeler.trees", json!(7)),
            ("schemes", json!(["ERM", "TunedCPPI"])),
            ("lambda", json!(0.0)),
        ]);
        let c = ExperimentConfig::from_overrides(ExperimentKind::SynthMean, &o).unwrap();
        assert_eq!(c.trials, 1);
        assert_eq!(c.synth.r2, 0.25);
        assert_eq!(c.lambda, Some(0.0));
        assert_eq!(c.schemes, vec![SchemeName::Erm, SchemeName::TunedCppi]);
        assert!(matches!(
            c.labeler.to_spec().kind,
            LabelerKind::ForestLite(ForestParams { trees: 7, .. })
        ));
    }

    #[test]
    fn config_errors() {
        let k = ExperimentKind::SynthMean;
        let bad =
            |pairs: &[(&str, Value)]| ExperimentConfig::from_overrides(k, &set(pairs)).unwrap_err();
        assert!(matches!(bad(&[("nope", json!(1))]), Error::Config(_)));
        assert!(matches!(bad(&[("trials", json!(0))]), Error::Config(_)));
        assert!(matches!(
            bad(&[("sweep.grid", json!([]))]),
            Error::Config(_)
        ));
        assert!(matches!(
            bad(&[("trials", json!("many"))]),
            Error::Config(_)
        ));
        assert!(matches!(
            bad(&[("schemes", json!(["MCPPI"]))]),
            Error::Config(_)
        ));
        assert!(matches!(
            bad(&[("experiment", json!("localize"))]),
            Error::Config(_)
        ));
        assert!(matches!(bad(&[("lambda", json!(1.5))]), Error::Config(_)));
    }

    #[test]
    fn flatten_round_trips() {
        let c = ExperimentConfig::defaults(ExperimentKind::BeamAlign);
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(unflatten(&flatten(&v)).unwrap(), v);
        let back: BTreeMap<String, Value> =
            serde_json::from_str(&c.to_flat_json().unwrap()).unwrap();
        assert_eq!(
            ExperimentConfig::from_overrides(ExperimentKind::BeamAlign, &back).unwrap(),
            c
        );
    }

    #[test]
    fn set_parsing() {
        assert_eq!(parse_set("trials=1").unwrap(), ("trials".into(), json!(1)));
        assert_eq!(parse_set("out=res").unwrap(), ("out".into(), json!("res")));
        assert_eq!(
            parse_set("sweep.grid=[50,200]").unwrap().1,
            json!([50, 200])
        );
        assert!(parse_set("trials").is_err());
    }

    #[test]
    fn sweep_sets_the_swept_field() {
        let mut c = ExperimentConfig::defaults(ExperimentKind::SynthMean);
        c.sweep.var = SweepVar::R2;
        assert_eq!(c.at_sweep(0.1).synth.r2, 0.1);
        c.sweep.var = SweepVar::Unlabeled;
        assert_eq!(c.at_sweep(500.0).big_n, 500);
    }
}
