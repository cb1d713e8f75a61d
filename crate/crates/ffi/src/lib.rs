//! C ABI over the crossppi estimators and experiment harness.
//!
//! Every call returns a [`CppiStatus`]. On failure the message is kept per
//! thread and read back with [`crossppi_last_error`]. Handles are opaque and
//! must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use crossppi::datasets::{LabeledDataset, UnlabeledDataset};
use crossppi::estimators::{erm_objective, solve, tuned_cppi_objective_from};
use crossppi::harness::{flatten, run_experiment, ExperimentConfig, ExperimentKind, ResultsTable};
use crossppi::labelers::{ForestParams, LabelerKind, LabelerSpec};
use crossppi::losses::{FeatureMap, LossModel};
use crossppi::tuning::{cross_fit, tuned_cppi_fit, TuningOptions};
use crossppi::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CppiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidState = 3,
    Numeric = 4,
    Config = 5,
    Io = 6,
    Parse = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CppiLoss {
    Mean = 0,
    LinearRegression = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CppiScheme {
    Erm = 0,
    Cppi = 1,
    TunedCppi = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CppiLabelerKind {
    ConstantMean = 0,
    /// `labeler_param` is the ridge strength.
    Ridge = 1,
    /// `labeler_param` is the neighbour count.
    Knn = 2,
    /// `labeler_param` is the tree count.
    ForestLite = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CppiFitOptions {
    pub folds: u32,
    pub bootstrap_runs: u32,
    /// Fixed λ for tuned CPPI; NaN estimates it from the data.
    pub lambda: f64,
    pub labeler: CppiLabelerKind,
    pub labeler_param: f64,
    pub seed: u64,
}

/// Labeled data with scalar labels.
pub struct CppiLabeled {
    inner: LabeledDataset,
}

pub struct CppiUnlabeled {
    inner: UnlabeledDataset,
}

/// Aggregated results of one experiment run.
pub struct CppiResults {
    csv: CString,
}

enum Fail {
    Null(&'static str),
    Small(String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CppiStatus {
    match e {
        Error::InvalidArgument(_) => CppiStatus::InvalidArgument,
        Error::InvalidState(_) => CppiStatus::InvalidState,
        Error::Numeric(_) => CppiStatus::Numeric,
        Error::Config(_) => CppiStatus::Config,
        Error::Io(_) => CppiStatus::Io,
        Error::Schema { .. } | Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => {
            CppiStatus::Parse
        }
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CppiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CppiStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            CppiStatus::NullPointer
        }
        Ok(Err(Fail::Small(msg))) => {
            set_error(msg);
            CppiStatus::BufferTooSmall
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            CppiStatus::Panic
        }
    }
}

unsafe fn rows(x: *const f64, n: usize, dim: usize) -> Result<Vec<Vec<f64>>, Fail> {
    if x.is_null() {
        return Err(Fail::Null("inputs"));
    }
    let len = n
        .checked_mul(dim)
        .ok_or_else(|| Fail::Lib(Error::InvalidArgument("n * dim overflows".into())))?;
    let flat = slice::from_raw_parts(x, len);
    Ok(flat
        .chunks_exact(dim.max(1))
        .take(n)
        .map(<[f64]>::to_vec)
        .collect())
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Lib(Error::InvalidArgument(format!("{what} is not UTF-8"))))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn crossppi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf`. Returns the
/// length the message needs including its NUL, or 0 if there is none.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn crossppi_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

#[no_mangle]
pub extern "C" fn crossppi_fit_options_default() -> CppiFitOptions {
    let t = TuningOptions::default();
    CppiFitOptions {
        folds: t.folds as u32,
        bootstrap_runs: t.bootstrap_runs as u32,
        lambda: f64::NAN,
        labeler: CppiLabelerKind::ForestLite,
        labeler_param: ForestParams::default().trees as f64,
        seed: 0,
    }
}

/// Build a labeled set from `n` row-major inputs of width `dim` and `n`
/// scalar labels.
///
/// # Safety
/// `x` must hold `n * dim` values, `y` `n` values, and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn crossppi_labeled_new(
    x: *const f64,
    n: usize,
    dim: usize,
    y: *const f64,
    out: *mut *mut CppiLabeled,
) -> CppiStatus {
    guard(|| {
        if y.is_null() {
            return Err(Fail::Null("labels"));
        }
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let inputs = rows(x, n, dim)?;
        let labels = slice::from_raw_parts(y, n).to_vec();
        let inner = LabeledDataset::scalar(inputs, labels)?;
        *out = Box::into_raw(Box::new(CppiLabeled { inner }));
        Ok(())
    })
}

/// # Safety
/// `h` must be null or come from [`crossppi_labeled_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn crossppi_labeled_free(h: *mut CppiLabeled) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `x` must hold `n * dim` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn crossppi_unlabeled_new(
    x: *const f64,
    n: usize,
    dim: usize,
    out: *mut *mut CppiUnlabeled,
) -> CppiStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let inner = UnlabeledDataset::new(rows(x, n, dim)?)?;
        *out = Box::into_raw(Box::new(CppiUnlabeled { inner }));
        Ok(())
    })
}

/// # Safety
/// `h` must be null or come from [`crossppi_unlabeled_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn crossppi_unlabeled_free(h: *mut CppiUnlabeled) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

fn labeler_spec(o: &CppiFitOptions) -> LabelerSpec {
    let kind = match o.labeler {
        CppiLabelerKind::ConstantMean => LabelerKind::ConstantMean,
        CppiLabelerKind::Ridge => LabelerKind::Ridge {
            strength: o.labeler_param,
        },
        CppiLabelerKind::Knn => LabelerKind::Knn {
            k: o.labeler_param as usize,
        },
        CppiLabelerKind::ForestLite => LabelerKind::ForestLite(ForestParams {
            trees: o.labeler_param as usize,
            ..ForestParams::default()
        }),
    };
    LabelerSpec::new(kind, o.seed)
}

fn fit(
    loss: CppiLoss,
    scheme: CppiScheme,
    l: &LabeledDataset,
    u: &UnlabeledDataset,
    o: &CppiFitOptions,
) -> Result<(Vec<f64>, f64), Error> {
    let model = match loss {
        CppiLoss::Mean => LossModel::mean_estimation(),
        CppiLoss::LinearRegression => LossModel::linear_regression(l.dim(), FeatureMap::Identity)?,
    };
    let lambda = match scheme {
        CppiScheme::Erm => return Ok((solve(&erm_objective(&model, l)?)?, f64::NAN)),
        CppiScheme::Cppi => 1.0,
        CppiScheme::TunedCppi => o.lambda,
    };
    let spec = labeler_spec(o);
    if lambda.is_nan() {
        let opts = TuningOptions {
            folds: o.folds as usize,
            bootstrap_runs: o.bootstrap_runs as usize,
            ..TuningOptions::default()
        };
        let f = tuned_cppi_fit(&model, l, u, &spec, &opts, o.seed)?;
        return Ok((f.theta, f.estimate.lambda_hat));
    }
    let (_, _, preds) = cross_fit(l, u, o.folds as usize, &spec, o.seed)?;
    Ok((
        solve(&tuned_cppi_objective_from(&model, l, u, &preds, lambda)?)?,
        lambda,
    ))
}

/// Fit `θ` under `scheme`. `theta_out` receives 1 value for the mean and
/// `dim` values for regression; `lambda_out` (optional) receives the λ used,
/// NaN for ERM. A null `opts` uses [`crossppi_fit_options_default`].
///
/// # Safety
/// Handles must be live, `theta_out` valid for `theta_cap` values and
/// `lambda_out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn crossppi_fit(
    loss: CppiLoss,
    scheme: CppiScheme,
    labeled: *const CppiLabeled,
    unlabeled: *const CppiUnlabeled,
    opts: *const CppiFitOptions,
    theta_out: *mut f64,
    theta_cap: usize,
    lambda_out: *mut f64,
) -> CppiStatus {
    guard(|| {
        let l = labeled.as_ref().ok_or(Fail::Null("labeled"))?;
        let u = unlabeled.as_ref().ok_or(Fail::Null("unlabeled"))?;
        if theta_out.is_null() {
            return Err(Fail::Null("theta_out"));
        }
        let o = opts
            .as_ref()
            .copied()
            .unwrap_or_else(|| crossppi_fit_options_default());
        let (theta, lambda) = fit(loss, scheme, &l.inner, &u.inner, &o)?;
        if theta.len() > theta_cap {
            return Err(Fail::Small(format!(
                "θ has {} entries, buffer holds {theta_cap}",
                theta.len()
            )));
        }
        slice::from_raw_parts_mut(theta_out, theta.len()).copy_from_slice(&theta);
        if !lambda_out.is_null() {
            *lambda_out = lambda;
        }
        Ok(())
    })
}

/// Run an experiment by name (e.g. `"synth-mean"`) with optional flat JSON
/// overrides such as `{"trials": 10, "synth.r2": 0.25}`.
///
/// # Safety
/// `name` must be a NUL-terminated string, `overrides_json` null or one, and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn crossppi_run_experiment(
    name: *const c_char,
    overrides_json: *const c_char,
    out: *mut *mut CppiResults,
) -> CppiStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let kind: ExperimentKind = text(name, "name")?.parse()?;
        let overrides = if overrides_json.is_null() {
            Default::default()
        } else {
            let v: serde_json::Value =
                serde_json::from_str(text(overrides_json, "overrides")?).map_err(Error::from)?;
            if !v.is_object() {
                return Err(Fail::Lib(Error::Config(
                    "overrides must be a JSON object".into(),
                )));
            }
            flatten(&v)
        };
        let cfg = ExperimentConfig::from_overrides(kind, &overrides)?;
        let table: ResultsTable = run_experiment(&cfg)?;
        let csv = CString::new(table.to_csv_string())
            .map_err(|_| Fail::Lib(Error::InvalidState("CSV contains NUL".into())))?;
        *out = Box::into_raw(Box::new(CppiResults { csv }));
        Ok(())
    })
}

/// Copy the results CSV into `buf`. `needed` (optional) receives its length
/// including the NUL; a short buffer yields `BufferTooSmall`.
///
/// # Safety
/// `res` must be live, `buf` valid for `cap` bytes, `needed` null or writable.
#[no_mangle]
pub unsafe extern "C" fn crossppi_results_csv(
    res: *const CppiResults,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> CppiStatus {
    guard(|| {
        let r = res.as_ref().ok_or(Fail::Null("results"))?;
        let bytes = r.csv.as_bytes_with_nul();
        if !needed.is_null() {
            *needed = bytes.len();
        }
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        if cap < bytes.len() {
            return Err(Fail::Small(format!(
                "CSV needs {} bytes, buffer holds {cap}",
                bytes.len()
            )));
        }
        std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, bytes.len());
        Ok(())
    })
}

/// # Safety
/// `h` must be null or come from [`crossppi_run_experiment`], freed once.
#[no_mangle]
pub unsafe extern "C" fn crossppi_results_free(h: *mut CppiResults) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}
