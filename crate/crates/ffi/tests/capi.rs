use std::ffi::{c_char, CStr};
use std::ptr;

use crossppi_ffi::*;

fn data(n: usize, dim: usize, seed: f64) -> (Vec<f64>, Vec<f64>) {
    let x: Vec<f64> = (0..n * dim)
        .map(|i| ((i as f64 + seed) * 0.618).sin())
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 2.0 + x[i * dim..(i + 1) * dim].iter().sum::<f64>() + 0.3 * (i as f64 * 1.3).cos())
        .collect();
    (x, y)
}

struct Handles {
    l: *mut CppiLabeled,
    u: *mut CppiUnlabeled,
}

impl Drop for Handles {
    fn drop(&mut self) {
        unsafe {
            crossppi_labeled_free(self.l);
            crossppi_unlabeled_free(self.u);
        }
    }
}

fn handles(n: usize, big_n: usize, dim: usize) -> (Handles, Vec<f64>) {
    let (x, y) = data(n, dim, 0.0);
    let (xu, _) = data(big_n, dim, 1000.0);
    let mut h = Handles {
        l: ptr::null_mut(),
        u: ptr::null_mut(),
    };
    unsafe {
        assert_eq!(
            crossppi_labeled_new(x.as_ptr(), n, dim, y.as_ptr(), &mut h.l),
            CppiStatus::Ok
        );
        assert_eq!(
            crossppi_unlabeled_new(xu.as_ptr(), big_n, dim, &mut h.u),
            CppiStatus::Ok
        );
    }
    (h, y)
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let need = unsafe { crossppi_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(need > 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_string_lossy()
        .into_owned()
}

fn fit(
    h: &Handles,
    loss: CppiLoss,
    scheme: CppiScheme,
    opts: &CppiFitOptions,
    cap: usize,
) -> (CppiStatus, Vec<f64>, f64) {
    let mut theta = vec![0.0; cap];
    let mut lambda = 0.0;
    let s = unsafe {
        crossppi_fit(
            loss,
            scheme,
            h.l,
            h.u,
            opts,
            theta.as_mut_ptr(),
            cap,
            &mut lambda,
        )
    };
    (s, theta, lambda)
}

fn ridge_opts() -> CppiFitOptions {
    CppiFitOptions {
        labeler: CppiLabelerKind::Ridge,
        labeler_param: 0.1,
        bootstrap_runs: 10,
        ..crossppi_fit_options_default()
    }
}

#[test]
fn erm_mean_is_the_sample_mean() {
    let (h, y) = handles(40, 200, 2);
    let (s, theta, lambda) = fit(&h, CppiLoss::Mean, CppiScheme::Erm, &ridge_opts(), 1);
    assert_eq!(s, CppiStatus::Ok);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    assert!((theta[0] - mean).abs() < 1e-10);
    assert!(lambda.is_nan());
}

#[test]
fn lambda_endpoints_match_erm_and_cppi() {
    let (h, _) = handles(40, 200, 2);
    let mut o = ridge_opts();
    let (_, erm, _) = fit(&h, CppiLoss::LinearRegression, CppiScheme::Erm, &o, 2);
    let (_, cppi, l1) = fit(&h, CppiLoss::LinearRegression, CppiScheme::Cppi, &o, 2);
    o.lambda = 0.0;
    let (_, t0, _) = fit(&h, CppiLoss::LinearRegression, CppiScheme::TunedCppi, &o, 2);
    o.lambda = 1.0;
    let (_, t1, _) = fit(&h, CppiLoss::LinearRegression, CppiScheme::TunedCppi, &o, 2);
    assert_eq!(l1, 1.0);
    for i in 0..2 {
        assert!((erm[i] - t0[i]).abs() <= 1e-12 * erm[i].abs().max(1.0));
        assert!((cppi[i] - t1[i]).abs() <= 1e-12 * cppi[i].abs().max(1.0));
    }
}

#[test]
fn estimated_lambda_lies_in_the_unit_interval() {
    let (h, _) = handles(40, 200, 2);
    let (s, _, lambda) = fit(&h, CppiLoss::Mean, CppiScheme::TunedCppi, &ridge_opts(), 1);
    assert_eq!(s, CppiStatus::Ok);
    assert!((0.0..=1.0).contains(&lambda));
}

#[test]
fn errors_set_status_and_message() {
    let (h, _) = handles(10, 20, 3);
    let (s, _, _) = fit(
        &h,
        CppiLoss::LinearRegression,
        CppiScheme::Erm,
        &ridge_opts(),
        1,
    );
    assert_eq!(s, CppiStatus::BufferTooSmall);
    assert!(last_error().contains("3 entries"));

    let mut out = ptr::null_mut();
    let s = unsafe { crossppi_labeled_new(ptr::null(), 3, 1, ptr::null(), &mut out) };
    assert_eq!(s, CppiStatus::NullPointer);
    assert!(out.is_null());
    assert!(last_error().starts_with("null pointer"));

    let mut o = ridge_opts();
    o.lambda = 1.5;
    let (s, _, _) = fit(&h, CppiLoss::Mean, CppiScheme::TunedCppi, &o, 1);
    assert_eq!(s, CppiStatus::InvalidArgument);

    // Success clears the message.
    let (s, _, _) = fit(&h, CppiLoss::Mean, CppiScheme::Erm, &ridge_opts(), 1);
    assert_eq!(s, CppiStatus::Ok);
    assert_eq!(unsafe { crossppi_last_error(ptr::null_mut(), 0) }, 0);
}

#[test]
fn last_error_truncates_to_the_buffer() {
    let mut out = ptr::null_mut();
    unsafe { crossppi_unlabeled_new(ptr::null(), 1, 1, &mut out) };
    let mut buf = [1 as c_char; 5];
    let need = unsafe { crossppi_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(need > 5);
    assert_eq!(buf[4], 0);
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_bytes(), b"null");
}

#[test]
fn experiment_csv_through_the_c_api() {
    let name = c"synth-mean";
    let cfg =
        c"{\"trials\": 2, \"N\": 300, \"schemes\": [\"ERM\", \"CPPI\"], \"labeler.trees\": 3}";
    let mut res = ptr::null_mut();
    let s = unsafe { crossppi_run_experiment(name.as_ptr(), cfg.as_ptr(), &mut res) };
    assert_eq!(s, CppiStatus::Ok, "{}", last_error());

    let mut need = 0;
    let mut tiny = [0 as c_char; 4];
    let s = unsafe { crossppi_results_csv(res, tiny.as_mut_ptr(), tiny.len(), &mut need) };
    assert_eq!(s, CppiStatus::BufferTooSmall);
    let mut buf = vec![0 as c_char; need];
    let s = unsafe { crossppi_results_csv(res, buf.as_mut_ptr(), buf.len(), ptr::null_mut()) };
    assert_eq!(s, CppiStatus::Ok);
    let csv = unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_str()
        .unwrap()
        .to_owned();
    unsafe { crossppi_results_free(res) };
    assert!(csv.starts_with("experiment,scheme,"));
    assert!(csv.contains("synth-mean,ERM,100,mse,"));
    assert!(csv.contains("synth-mean,CPPI,100,mse,"));
}

#[test]
fn bad_experiment_requests_are_rejected() {
    let mut res = ptr::null_mut();
    let s = unsafe { crossppi_run_experiment(c"no-such".as_ptr(), ptr::null(), &mut res) };
    assert_ne!(s, CppiStatus::Ok);
    assert!(res.is_null());
    let s = unsafe {
        crossppi_run_experiment(
            c"synth-mean".as_ptr(),
            c"{\"bogus.key\": 1}".as_ptr(),
            &mut res,
        )
    };
    assert_eq!(s, CppiStatus::Config);
    let s = unsafe { crossppi_run_experiment(c"synth-mean".as_ptr(), c"[1]".as_ptr(), &mut res) };
    assert_eq!(s, CppiStatus::Config);
}

#[test]
fn version_and_header() {
    let v = unsafe { CStr::from_ptr(crossppi_version()) }
        .to_str()
        .unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/crossppi.h"))
            .unwrap();
    for sym in [
        "crossppi_fit(",
        "crossppi_run_experiment(",
        "typedef struct CppiLabeled CppiLabeled",
        "CPPI_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(header.contains(sym), "{sym} missing from header");
    }
}
