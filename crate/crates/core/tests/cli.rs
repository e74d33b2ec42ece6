use std::path::Path;
use std::process::Command;

use annular::cli::strip_timestamps;
use serde_json::Value;

const SCALAR: &str = r#"{"A0": [[-2]], "blocks": [{"A": [[-1]], "H": [[1]], "family": "tanh"}], "C": [[1]]}"#;

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str], out: &Path) -> (i32, Value) {
    let status = Command::new(env!("CARGO_BIN_EXE_annular"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("ANNULAR_SOLVER")
        .output()
        .unwrap();
    let report = std::fs::read_to_string(out.join("report.json"))
        .map(|s| serde_json::from_str(&s).unwrap())
        .unwrap_or(Value::Null);
    (status.status.code().unwrap(), report)
}

#[test]
fn certify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write_config(
        dir.path(),
        "ok.json",
        &format!(r#"{{"system": {SCALAR}, "query": {{"kind": "STBNZ", "T": 1, "eps2": 0.5, "delta2": 1, "gamma0": 1}}}}"#),
    );
    let (code, rep) = run(&["certify", "--config", ok.to_str().unwrap()], &dir.path().join("a"));
    assert_eq!(code, 0, "{rep}");
    assert_eq!(rep["status"], "certified");
    assert_eq!(rep["check"]["passed"], true);

    let tight = write_config(
        dir.path(),
        "tight.json",
        &format!(r#"{{"system": {SCALAR}, "query": {{"kind": "STBNZ", "T": 1, "eps2": 1, "delta2": 0.5, "gamma0": 1}}}}"#),
    );
    let (code, rep) = run(&["certify", "--config", tight.to_str().unwrap()], &dir.path().join("b"));
    assert_eq!(code, 2, "{rep}");
    assert!(rep["reason"].as_str().unwrap().contains("necessary growth condition"));
}

#[test]
fn inclusion_violation_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(
        dir.path(),
        "bad.json",
        &format!(
            r#"{{"system": {SCALAR}, "query": {{"kind": "ASTS", "T": 1, "eps1": 0.1, "eps2": 1, "delta1": 0.5, "delta2": 2, "gamma0": 1}}}}"#
        ),
    );
    let (code, rep) = run(&["certify", "--config", bad.to_str().unwrap()], &dir.path().join("o"));
    assert_eq!(code, 1);
    assert!(rep["error"].as_str().unwrap().contains("(ε₁,ε₂) ⊆ (δ₁,δ₂)"), "{rep}");
}

#[test]
fn falsify_exit_codes_and_witness() {
    let dir = tempfile::tempdir().unwrap();
    let body = |d2: f64| {
        format!(
            r#"{{"system": {SCALAR}, "query": {{"kind": "STBNZ", "T": 1, "eps2": 1, "delta2": {d2}, "gamma0": 0.5}},
               "simulation": {{"samples": 60}}}}"#
        )
    };
    let ok = write_config(dir.path(), "ok.json", &body(1.5));
    let (code, rep) = run(&["falsify", "--config", ok.to_str().unwrap()], &dir.path().join("a"));
    assert_eq!(code, 0, "{rep}");
    let bad = write_config(dir.path(), "bad.json", &body(0.9));
    let out = dir.path().join("b");
    let (code, rep) = run(&["falsify", "--config", bad.to_str().unwrap()], &out);
    assert_eq!(code, 3, "{rep}");
    assert!(out.join("worst_trajectory.csv").exists());
    let (code, _) = run(&["falsify", "--config", ok.to_str().unwrap(), "--samples", "0"], &dir.path().join("c"));
    assert_eq!(code, 1);
}

#[test]
fn reports_are_reproducible_up_to_timestamps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &format!(
            r#"{{"system": {SCALAR}, "query": {{"kind": "STBNZ", "T": 1, "eps2": 1, "delta2": 1.5, "gamma0": 0.5}},
               "simulation": {{"samples": 40, "seed": 7}}}}"#
        ),
    );
    for cmd in ["certify", "falsify", "simulate"] {
        let (c1, mut r1) = run(&[cmd, "--config", cfg.to_str().unwrap()], &dir.path().join(format!("{cmd}1")));
        let (c2, mut r2) = run(&[cmd, "--config", cfg.to_str().unwrap()], &dir.path().join(format!("{cmd}2")));
        assert_eq!(c1, c2);
        strip_timestamps(&mut r1);
        strip_timestamps(&mut r2);
        assert_eq!(serde_json::to_string(&r1).unwrap(), serde_json::to_string(&r2).unwrap(), "{cmd}");
    }
}

#[test]
fn unknown_example_and_solver_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (code, rep) = run(&["reproduce", "--example", "3", "--budget", "1"], dir.path());
    assert_eq!(code, 1);
    assert!(rep["error"].as_str().unwrap().contains("unknown example"));
    let cfg = write_config(
        dir.path(),
        "c.json",
        &format!(r#"{{"system": {SCALAR}, "query": {{"kind": "STBNZ", "T": 1, "eps2": 0.5, "delta2": 1, "gamma0": 1}}}}"#),
    );
    let st = Command::new(env!("CARGO_BIN_EXE_annular"))
        .args(["certify", "--config", cfg.to_str().unwrap()])
        .env("ANNULAR_SOLVER", "nope")
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(1));
}

#[test]
fn simulate_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &format!(
            r#"{{"system": {SCALAR}, "query": {{"kind": "STBNZ", "T": 1, "eps2": 1, "delta2": 1.5, "gamma0": 0.5}},
               "simulation": {{"x0": [1.0], "input": {{"kind": "constant", "value": [0.5]}}, "csv_points": 10}}}}"#
        ),
    );
    let out = dir.path().join("o");
    let (code, rep) = run(&["simulate", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(code, 0, "{rep}");
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 12);
    assert!(csv.starts_with("t,x1,norm_x,norm_y"));
    assert_eq!(rep["verdict"]["passed"], true);
}
