//! Results tables and their CSV / plot-data serializations.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "experiment,scheme,sweep,metric,mean,stderr,trials";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsRow {
    pub experiment: String,
    pub scheme: String,
    pub sweep: f64,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
    /// Per-trial values behind `mean` and `stderr` (not serialized).
    pub values: Vec<f64>,
}

impl ResultsRow {
    /// Mean and standard error (sample standard deviation over `√trials`).
    pub fn from_values(
        experiment: &str,
        scheme: &str,
        sweep: f64,
        metric: &str,
        values: Vec<f64>,
    ) -> Self {
        let (mean, stderr) = mean_stderr(&values);
        Self {
            experiment: experiment.to_string(),
            scheme: scheme.to_string(),
            sweep,
            metric: metric.to_string(),
            mean,
            stderr,
            trials: values.len(),
            values,
        }
    }
}

pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    if m == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64;
    (mean, (var / m as f64).sqrt())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultsRow>,
}

impl ResultsTable {
    pub fn find(&self, scheme: &str, sweep: f64, metric: &str) -> Option<&ResultsRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.sweep == sweep && r.metric == metric)
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.experiment,
                r.scheme,
                fmt_g(r.sweep),
                r.metric,
                fmt_g(r.mean),
                fmt_g(r.stderr),
                r.trials
            );
        }
        s
    }
}

pub fn emit_csv(table: &ResultsTable, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, table.to_csv_string())?;
    Ok(())
}

/// One file per (scheme, metric) named `<experiment>_<scheme>_<metric>.dat`
/// holding whitespace-separated `sweep mean stderr` lines.
pub fn emit_plotdata(
    table: &ResultsTable,
    dir: impl AsRef<Path>,
) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut keys: Vec<(&str, &str, &str)> = Vec::new();
    for r in &table.rows {
        let k = (r.experiment.as_str(), r.scheme.as_str(), r.metric.as_str());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut written = Vec::new();
    for (e, s, m) in keys {
        let mut body = String::from("# sweep mean stderr\n");
        for r in table
            .rows
            .iter()
            .filter(|r| r.experiment == e && r.scheme == s && r.metric == m)
        {
            let _ = writeln!(
                body,
                "{} {} {}",
                fmt_g(r.sweep),
                fmt_g(r.mean),
                fmt_g(r.stderr)
            );
        }
        let path = dir.join(format!("{e}_{s}_{m}.dat"));
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

/// Parse a CSV produced by [`emit_csv`]; per-trial values are not restored.
pub fn parse_csv(text: &str) -> Result<ResultsTable> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Config("unexpected results header".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Config(format!("malformed results row {}", i + 2));
        if f.len() != 7 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        rows.push(ResultsRow {
            experiment: f[0].to_string(),
            scheme: f[1].to_string(),
            sweep: num(f[2])?,
            metric: f[3].to_string(),
            mean: num(f[4])?,
            stderr: num(f[5])?,
            trials: f[6].parse().map_err(|_| bad())?,
            values: Vec::new(),
        });
    }
    Ok(ResultsTable { rows })
}

/// C `printf("%.12g")`.
pub fn fmt_g(x: f64) -> String {
    const P: i32 = 12;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let mant = strip_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        strip_zeros(&format!("{:.*}", (P - 1 - exp) as usize, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
