use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn np_shape(args: &[&str], out: &Path, threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_np-shape"));
    cmd.args(args).arg("--out").arg(out);
    match threads {
        Some(t) => cmd.env("NP_SHAPE_THREADS", t),
        None => cmd.env_remove("NP_SHAPE_THREADS"),
    };
    cmd.output().unwrap()
}

fn report(out: &Path, command: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join(format!("{command}.json"))).unwrap()).unwrap()
}

#[test]
fn spectrum_writes_report_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = np_shape(&["spectrum", "--curve", "ellipse:1,0.5", "--N", "64"], dir.path(), None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("PASS ")));
    let r = report(dir.path(), "spectrum");
    assert_eq!(r["command"], "spectrum");
    assert_eq!(r["passed"], true);
    assert_eq!(r["config"]["N"], 64);
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
    let csv = fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,x1,x2,nu1,nu2,kappa,w");
    assert_eq!(csv.lines().count(), 65);
    assert!(dir.path().join("spectrum.csv").exists());
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["deriv-check", "--curve", "ellipse:1,0.5", "--N", "64", "--theta", "generic"];
    let mut seen = Vec::new();
    for threads in [Some("1"), Some("3"), None] {
        let o = np_shape(&args, dir.path(), threads);
        assert!(o.status.code().is_some());
        seen.push(fs::read(dir.path().join("deriv-check.json")).unwrap());
    }
    assert!(seen.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn config_hash_tracks_settings() {
    let dir = tempfile::tempdir().unwrap();
    let hash = |n: &str| {
        np_shape(&["spectrum", "--N", n], dir.path(), None);
        report(dir.path(), "spectrum")["config_hash"].as_str().unwrap().to_string()
    };
    let (a, b, c) = (hash("32"), hash("32"), hash("48"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn failing_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = np_shape(&["spectrum", "--curve", "kite", "--N", "32", "--tol", "1e-300"], dir.path(), None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL "));
    assert_eq!(report(dir.path(), "spectrum")["passed"], false);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad: [&[&str]; 6] = [
        &["frobnicate"],
        &["spectrum", "--curve", "square"],
        &["spectrum", "--N", "15"],
        &["identities", "--only", "nonsense"],
        &["deriv-check", "--theta", "swirl"],
        &["deriv-check", "--N", "64", "--lambda", "0.3", "--delta", "0.01"],
    ];
    for args in bad {
        let o = np_shape(args, dir.path(), None);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = np_shape(&["spectrum"], dir.path(), Some("0"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    fs::write(&good, r#"{"curve": "circle:1", "N": 32}"#).unwrap();
    let o = np_shape(&["spectrum", "--config", good.to_str().unwrap()], dir.path(), None);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(dir.path(), "spectrum")["config"]["curve"], "circle:1");
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"curve": "circle:1", "nodes": 32}"#).unwrap();
    let o = np_shape(&["spectrum", "--config", bad.to_str().unwrap()], dir.path(), None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sphere_criticality_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = np_shape(&["sphere-crit", "--kmax", "3"], dir.path(), None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let csv = fs::read_to_string(dir.path().join("sphere_crit.csv")).unwrap();
    assert!(csv.lines().count() > 1);
}
