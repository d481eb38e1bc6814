use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn qprop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qprop")).args(args).output().expect("binary runs")
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn linear_gradient_is_exact_for_one_query() {
    let v = json_stdout(&qprop(&["gradient", "--config", &config("gradient_linear.json")]));
    assert_eq!(v["estimate"]["decoded"], serde_json::json!([0.25, -0.125]));
    assert_eq!(v["estimate"]["queries"], 1);
    assert_eq!(v["estimate"]["success_probability"], 1.0);
}

#[test]
fn every_sample_config_runs() {
    for (cmd, file) in [
        ("gradient", "gradient_linear.json"),
        ("hessian", "hessian_nested.json"),
        ("newton", "newton_morse.json"),
        ("basinhop", "basinhop_mueller_brown.json"),
    ] {
        let out = qprop(&[cmd, "--config", &config(file)]);
        assert!(out.status.success(), "{file}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn malformed_config_exits_two_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", "{ \"oracle\": ");
    let out_dir = dir.path().join("out");
    let out = qprop(&["gradient", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bad.json:1:"), "{stderr}");
    assert!(!out_dir.exists() || fs::read_dir(&out_dir).unwrap().next().is_none());
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "typo.json",
        r#"{"oracle": {"name": "linear", "params": {"gradient": [0.25]}}, "domian": {"center": [0.0]}}"#,
    );
    let out = qprop(&["gradient", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("domian"));
}

#[test]
fn runtime_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "outside.json",
        r#"{"oracle": {"name": "morse_1d", "params": {}}, "start": [9.0]}"#,
    );
    let out = qprop(&["newton", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn table1_csv_has_constant_quantum_column() {
    let mut columns = Vec::new();
    for d in ["1", "4"] {
        let out = qprop(&["table1", "--d", d, "--format", "csv"]);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "order,quantum_measured,classical_measured,classical_numerical_formula,classical_analytical_scaling"
        );
        let quantum: Vec<String> = lines.map(|l| l.split(',').nth(1).unwrap().to_string()).collect();
        columns.push(quantum);
    }
    assert_eq!(columns[0], ["1", "2", "4", "8"]);
    assert_eq!(columns[0], columns[1]);
}

#[test]
fn identical_seeds_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = qprop(&[
            "basinhop",
            "--config",
            &config("basinhop_mueller_brown.json"),
            "--seed",
            "11",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        reports.push(fs::read(out_dir.join("basinhop.json")).unwrap());
        assert!(out_dir.join("basinhop.csv").exists());
    }
    assert_eq!(reports[0], reports[1]);
    let v: Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(v["seed"], 11);
}
