use std::path::Path;
use std::process::{Command, Output};

fn crossppi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crossppi"))
        .args(args)
        .output()
        .expect("spawn crossppi")
}

fn small<'a>(out: &'a Path, extra: &[&'a str]) -> Vec<String> {
    let mut v: Vec<String> = [
        "--out",
        out.to_str().unwrap(),
        "--trials",
        "2",
        "--set",
        "N=300",
        "--set",
        "labeler.trees=3",
        "--set",
        "schemes=[\"ERM\",\"CPPI\"]",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run(cmd: &str, args: &[String]) -> Output {
    let mut all = vec![cmd];
    all.extend(args.iter().map(String::as_str));
    crossppi(&all)
}

#[test]
fn synth_run_prints_csv_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("synth-mean", &small(dir.path(), &[]));
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("experiment,scheme,sweep,metric,mean,stderr,trials"));
    assert!(stdout.contains("synth-mean,CPPI,100,mse,"));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("synth-mean.csv")).unwrap(),
        stdout
    );
    assert!(dir.path().join("plotdata").is_dir());
}

#[test]
fn set_overrides_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"n": 30, "sweep": {"grid": [30]}}"#).unwrap();
    let o = run(
        "synth-mean",
        &small(
            dir.path(),
            &[
                "--config",
                cfg.to_str().unwrap(),
                "--set",
                "sweep.grid=[40]",
            ],
        ),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("synth-mean,ERM,40,mse,"));
    assert!(!stdout.contains(",30,mse,"));
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = run("synth-linreg", &small(dir.path(), &["--seed", "3"])).stdout;
    let b = run("synth-linreg", &small(dir.path(), &["--seed", "3"])).stdout;
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(
            "synth-mean",
            &small(dir.path(), &["--set", "no.such.key=1"])
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        run("synth-mean", &small(dir.path(), &["--set", "synth.r2=3"]))
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(
            "localize",
            &small(dir.path(), &["--set", "schemes=[\"MCPPI\"]"])
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(crossppi(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(
        crossppi(&["synth-mean", "--trials", "many"]).status.code(),
        Some(2)
    );
}

#[test]
fn help_and_version_exit_cleanly() {
    let o = crossppi(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("lambda-probe"));
    assert_eq!(crossppi(&["--version"]).status.code(), Some(0));
}

#[test]
fn all_trials_failing_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("synth-linreg", &small(dir.path(), &["--set", "synth.d=1"]));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains(",failures,"));
}

#[test]
fn validate_is_green() {
    let o = crossppi(&["validate"]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.lines().count() >= 9);
    assert!(stdout.lines().all(|l| l.starts_with("PASS ")));
}

#[test]
fn lambda_probe_reports_every_trial() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("lambda-probe", &{
        let mut v = vec!["synth-mean".to_string()];
        v.extend(small(dir.path(), &[]));
        v
    });
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("sweep trial lambda_hat"));
    assert_eq!(stdout.lines().filter(|l| l.starts_with("100 ")).count(), 2);
    assert_eq!(
        crossppi(&["lambda-probe", "mcppi-beam"]).status.code(),
        Some(1)
    );
}
