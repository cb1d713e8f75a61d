//! RSSI fingerprint records: CSV ingestion in the UJIIndoorLoc column schema
//! and a log-distance path-loss generator producing the same schema.

use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{Label, LabeledDataset, UnlabeledDataset};
use crate::error::{invalid, Error, Result};
use crate::rng::rng_from_seed;

/// Reserved cell value meaning "access point not detected".
pub const RSSI_NOT_DETECTED: f64 = 100.0;
/// Value substituted for [`RSSI_NOT_DETECTED`] when building features.
pub const DEFAULT_RSSI_FLOOR_DBM: f64 = -110.0;
/// Distances below this are clamped before taking the logarithm.
pub const MIN_AP_DISTANCE_M: f64 = 0.1;

const LONGITUDE: &str = "LONGITUDE";
const LATITUDE: &str = "LATITUDE";
const FLOOR: &str = "FLOOR";
const BUILDING: &str = "BUILDINGID";

#[derive(Debug, Clone, PartialEq)]
pub struct RssiRecord {
    /// One entry per access point, in dBm, or [`RSSI_NOT_DETECTED`].
    pub rssi: Vec<f64>,
    /// (longitude, latitude)
    pub position: [f64; 2],
    pub floor: Option<i64>,
    pub building: Option<i64>,
    /// Cells of non-schema columns, verbatim, in header order.
    pub extra: Vec<String>,
}

/// Parsed CSV contents.
#[derive(Debug, Clone, PartialEq)]
pub struct RssiTable {
    pub header: Vec<String>,
    pub records: Vec<RssiRecord>,
}

impl RssiTable {
    pub fn ap_count(&self) -> usize {
        self.header.iter().filter(|h| is_ap_column(h)).count()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Labeled dataset with sentinel cells mapped to `floor_dbm`.
    pub fn to_dataset(&self, floor_dbm: f64) -> Result<LabeledDataset> {
        LabeledDataset::new(
            self.records
                .iter()
                .map(|r| rssi_features(r, floor_dbm))
                .collect(),
            self.records
                .iter()
                .map(|r| Label::Vector(r.position.to_vec()))
                .collect(),
        )
    }
}

fn is_ap_column(h: &str) -> bool {
    h.len() > 3 && h.starts_with("WAP") && h[3..].bytes().all(|b| b.is_ascii_digit())
}

/// Feature vector with "not detected" cells replaced by `floor_dbm`.
pub fn rssi_features(record: &RssiRecord, floor_dbm: f64) -> Vec<f64> {
    record
        .rssi
        .iter()
        .map(|&v| if v == RSSI_NOT_DETECTED { floor_dbm } else { v })
        .collect()
}

/// Read an RSSI CSV, keeping rows that match the optional building/floor filter.
pub fn load_rssi_csv(
    path: impl AsRef<Path>,
    building: Option<i64>,
    floor: Option<i64>,
) -> Result<RssiTable> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let schema_err = |message: String| Error::Schema {
        path: path.to_path_buf(),
        message,
    };
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| schema_err(format!("missing column {name}")))
    };
    let lon_col = find(LONGITUDE)?;
    let lat_col = find(LATITUDE)?;
    let floor_col = find(FLOOR)?;
    let building_col = find(BUILDING)?;
    let ap_cols: Vec<usize> = (0..header.len())
        .filter(|&i| is_ap_column(&header[i]))
        .collect();
    if ap_cols.is_empty() {
        return Err(schema_err("no WAPxxx access-point columns".into()));
    }
    let extra_cols: Vec<usize> = (0..header.len())
        .filter(|&i| {
            !ap_cols.contains(&i) && ![lon_col, lat_col, floor_col, building_col].contains(&i)
        })
        .collect();

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let parse_err = |col: usize, cell: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("column {}: cannot parse {cell:?}", header[col]),
        };
        let num = |col: usize| -> Result<f64> {
            let cell = row.get(col).unwrap_or("");
            cell.trim().parse::<f64>().map_err(|_| parse_err(col, cell))
        };
        let int = |col: usize| -> Result<i64> {
            let cell = row.get(col).unwrap_or("");
            cell.trim().parse::<i64>().map_err(|_| parse_err(col, cell))
        };
        let rec = RssiRecord {
            rssi: ap_cols.iter().map(|&c| num(c)).collect::<Result<_>>()?,
            position: [num(lon_col)?, num(lat_col)?],
            floor: Some(int(floor_col)?),
            building: Some(int(building_col)?),
            extra: extra_cols
                .iter()
                .map(|&c| row.get(c).unwrap_or("").to_owned())
                .collect(),
        };
        if building.is_some_and(|b| rec.building != Some(b))
            || floor.is_some_and(|f| rec.floor != Some(f))
        {
            continue;
        }
        records.push(rec);
    }
    Ok(RssiTable { header, records })
}

/// Write records back in the column order of `table.header`.
pub fn write_rssi_csv(table: &RssiTable, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", table.header.join(","))?;
    for rec in &table.records {
        let mut ap = rec.rssi.iter();
        let mut extra = rec.extra.iter();
        let cells: Vec<String> = table
            .header
            .iter()
            .map(|h| match h.as_str() {
                LONGITUDE => rec.position[0].to_string(),
                LATITUDE => rec.position[1].to_string(),
                FLOOR => rec.floor.map(|f| f.to_string()).unwrap_or_default(),
                BUILDING => rec.building.map(|b| b.to_string()).unwrap_or_default(),
                h if is_ap_column(h) => ap.next().map(|v| v.to_string()).unwrap_or_default(),
                _ => extra.next().cloned().unwrap_or_default(),
            })
            .collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Area {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Area {
    pub fn sample(&self, rng: &mut crate::rng::Rng) -> [f64; 2] {
        [
            rng.random_range(self.x0..self.x1),
            rng.random_range(self.y0..self.y1),
        ]
    }
}

/// Log-distance path loss: `RSSI = −PL0 − 10·α·log10(d) + N(0, shadow_std²)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PathLossModel {
    pub pl0: f64,
    pub alpha: f64,
    pub shadow_std: f64,
}

impl PathLossModel {
    pub fn mean_rssi(&self, distance: f64) -> f64 {
        -self.pl0 - 10.0 * self.alpha * distance.max(MIN_AP_DISTANCE_M).log10()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRssi {
    pub labeled: LabeledDataset,
    pub unlabeled: UnlabeledDataset,
    pub access_points: Vec<[f64; 2]>,
}

impl SyntheticRssi {
    /// Labeled part in the CSV schema (building 0, floor 0).
    pub fn to_table(&self) -> RssiTable {
        let m = self.access_points.len();
        let mut header: Vec<String> = (1..=m).map(|j| format!("WAP{j:03}")).collect();
        header.extend([LONGITUDE, LATITUDE, FLOOR, BUILDING].map(String::from));
        let records = self
            .labeled
            .inputs()
            .iter()
            .zip(self.labeled.labels())
            .map(|(x, y)| {
                let Label::Vector(p) = y else { unreachable!() };
                RssiRecord {
                    rssi: x.clone(),
                    position: [p[0], p[1]],
                    floor: Some(0),
                    building: Some(0),
                    extra: vec![],
                }
            })
            .collect();
        RssiTable { header, records }
    }
}

/// Access points uniform in `area`; `n` labeled and `N` unlabeled fingerprints
/// at uniform positions.
pub fn gen_synthetic_rssi(
    m: usize,
    area: Area,
    pathloss: PathLossModel,
    n: usize,
    big_n: usize,
    seed: u64,
) -> Result<SyntheticRssi> {
    if m < 3 {
        return invalid("at least 3 access points are required");
    }
    if !(area.x1 > area.x0 && area.y1 > area.y0) {
        return invalid("area must have positive extent");
    }
    if big_n == 0 {
        return invalid("N must be at least 1");
    }
    let mut rng = rng_from_seed(seed);
    let aps: Vec<[f64; 2]> = (0..m).map(|_| area.sample(&mut rng)).collect();
    let shadow = Normal::new(0.0, pathloss.shadow_std.max(0.0))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let draw = |rng: &mut crate::rng::Rng| {
        let pos = area.sample(rng);
        let rssi: Vec<f64> = aps
            .iter()
            .map(|ap| {
                let d = ((pos[0] - ap[0]).powi(2) + (pos[1] - ap[1]).powi(2)).sqrt();
                let s = if pathloss.shadow_std > 0.0 {
                    shadow.sample(rng)
                } else {
                    0.0
                };
                pathloss.mean_rssi(d) + s
            })
            .collect();
        (rssi, pos)
    };
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, p) = draw(&mut rng);
        inputs.push(x);
        labels.push(Label::Vector(p.to_vec()));
    }
    let unlabeled = (0..big_n).map(|_| draw(&mut rng).0).collect();
    Ok(SyntheticRssi {
        labeled: LabeledDataset::new(inputs, labels)?,
        unlabeled: UnlabeledDataset::new(unlabeled)?,
        access_points: aps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str =
        "WAP001,WAP002,WAP003,WAP004,LONGITUDE,LATITUDE,FLOOR,BUILDINGID,SPACEID\n\
-70,100,-85,-91,-7541.2643,4864921.9054,1,0,106\n\
100,-60,-77,100,-7536.6212,4864934.2221,1,0,107\n\
-88,-73,100,-66,-7519.1524,4864949.532,2,0,210\n";

    fn fixture(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn floor_filter_keeps_matching_rows() {
        let f = fixture(FIXTURE);
        let t = load_rssi_csv(f.path(), None, Some(1)).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.ap_count(), 4);
        assert_eq!(load_rssi_csv(f.path(), Some(0), Some(2)).unwrap().len(), 1);
        assert_eq!(load_rssi_csv(f.path(), Some(1), None).unwrap().len(), 0);
    }

    #[test]
    fn sentinel_preserved_and_round_trips_byte_exact() {
        let f = fixture(FIXTURE);
        let t = load_rssi_csv(f.path(), None, None).unwrap();
        assert_eq!(t.records[0].rssi[1], RSSI_NOT_DETECTED);
        assert_eq!(
            rssi_features(&t.records[0], DEFAULT_RSSI_FLOOR_DBM)[1],
            -110.0
        );
        let out = tempfile::NamedTempFile::new().unwrap();
        write_rssi_csv(&t, out.path()).unwrap();
        assert_eq!(std::fs::read_to_string(out.path()).unwrap(), FIXTURE);
    }

    #[test]
    fn missing_longitude_is_schema_error() {
        let f = fixture("WAP001,LATITUDE,FLOOR,BUILDINGID\n-70,1.0,0,0\n");
        assert!(matches!(
            load_rssi_csv(f.path(), None, None),
            Err(Error::Schema { .. })
        ));
    }

    #[test]
    fn bad_cell_reports_line() {
        let f = fixture(
            "WAP001,LONGITUDE,LATITUDE,FLOOR,BUILDINGID\n-70,1.0,2.0,0,0\n-7x,1.0,2.0,0,0\n",
        );
        match load_rssi_csv(f.path(), None, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn path_loss_at_round_numbers() {
        let pl = PathLossModel {
            pl0: 40.0,
            alpha: 2.0,
            shadow_std: 0.0,
        };
        assert!((pl.mean_rssi(10.0) - (-60.0)).abs() < 1e-12);
        assert_eq!(pl.mean_rssi(0.0), pl.mean_rssi(MIN_AP_DISTANCE_M));
    }

    #[test]
    fn noiseless_fingerprints_trilaterate() {
        let area = Area {
            x0: 0.0,
            y0: 0.0,
            x1: 50.0,
            y1: 30.0,
        };
        let pl = PathLossModel {
            pl0: 30.0,
            alpha: 2.5,
            shadow_std: 0.0,
        };
        let s = gen_synthetic_rssi(3, area, pl, 20, 1, 17).unwrap();
        let ap = &s.access_points;
        for (x, y) in s.labeled.inputs().iter().zip(s.labeled.labels()) {
            let Label::Vector(p) = y else { panic!() };
            let d: Vec<f64> = x
                .iter()
                .map(|r| 10f64.powf((-pl.pl0 - r) / (10.0 * pl.alpha)))
                .collect();
            // subtract the first circle equation from the others: linear 2x2 system
            let a11 = 2.0 * (ap[1][0] - ap[0][0]);
            let a12 = 2.0 * (ap[1][1] - ap[0][1]);
            let a21 = 2.0 * (ap[2][0] - ap[0][0]);
            let a22 = 2.0 * (ap[2][1] - ap[0][1]);
            let sq = |q: [f64; 2]| q[0] * q[0] + q[1] * q[1];
            let b1 = d[0] * d[0] - d[1] * d[1] + sq(ap[1]) - sq(ap[0]);
            let b2 = d[0] * d[0] - d[2] * d[2] + sq(ap[2]) - sq(ap[0]);
            let det = a11 * a22 - a12 * a21;
            let px = (b1 * a22 - b2 * a12) / det;
            let py = (a11 * b2 - a21 * b1) / det;
            assert!(
                (px - p[0]).abs() < 1e-6 && (py - p[1]).abs() < 1e-6,
                "{px},{py} vs {p:?}"
            );
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let area = Area {
            x0: 0.0,
            y0: 0.0,
            x1: 10.0,
            y1: 10.0,
        };
        let pl = PathLossModel {
            pl0: 30.0,
            alpha: 2.0,
            shadow_std: 4.0,
        };
        assert_eq!(
            gen_synthetic_rssi(8, area, pl, 10, 5, 3).unwrap(),
            gen_synthetic_rssi(8, area, pl, 10, 5, 3).unwrap()
        );
    }
}
