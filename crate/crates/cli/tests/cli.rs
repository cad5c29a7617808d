use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn owl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_owl")).args(args).output().expect("owl runs")
}

fn write_spec(dir: &Path) -> String {
    let spec = dir.join("spec.json");
    fs::write(
        &spec,
        r#"{"extent": [30.0, 30.0, 4.0], "start": [6.0, 15.0, 1.6], "segments": 2, "segment_length": [8.0, 12.0], "artifacts": 1, "artifact_spacing": 4.0}"#,
    )
    .unwrap();
    spec.to_str().unwrap().to_owned()
}

fn genworld(dir: &Path) -> String {
    let spec = write_spec(dir);
    let world = dir.join("w.owlworld");
    let out = owl(&["genworld", "--spec", &spec, "--seed", "4", "--out", world.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    world.to_str().unwrap().to_owned()
}

#[test]
fn genworld_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let w = genworld(d.path());
    let first = fs::read(&w).unwrap();
    genworld(d.path());
    assert_eq!(first, fs::read(&w).unwrap());
}

#[test]
fn run_then_export_and_score() {
    let d = tempfile::tempdir().unwrap();
    genworld(d.path());
    let cfg = d.path().join("mission.json");
    fs::write(&cfg, r#"{"world": {"file": {"path": "w.owlworld"}}, "start": [6.0, 15.0, 1.6], "endurance": 25.0}"#).unwrap();
    let run_dir = d.path().join("run");
    let out = owl(&["run", "--config", cfg.to_str().unwrap(), "--seed", "2", "--out", run_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics["outcome"], "landed");
    let csv = fs::read_to_string(run_dir.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x,y,z,yaw,vx,vy,vz,mode\n"));

    let out = owl(&["export-map", "--run", run_dir.to_str().unwrap(), "--format", "ply"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ply = fs::read_to_string(run_dir.join("map.ply")).unwrap();
    assert!(ply.starts_with("ply\nformat ascii 1.0\nelement vertex "));

    let reports = run_dir.join("artifacts.jsonl");
    let world = d.path().join("w.owlworld");
    let out = owl(&["score", "--reports", reports.to_str().unwrap(), "--world", world.to_str().unwrap(), "--tol", "2.0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let score: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(score["ground_truth"], 1);
}

#[test]
fn empty_reports_score_zero_recall() {
    let d = tempfile::tempdir().unwrap();
    let world = genworld(d.path());
    let reports = d.path().join("none.jsonl");
    fs::write(&reports, "").unwrap();
    let out = owl(&["score", "--reports", reports.to_str().unwrap(), "--world", &world]);
    assert!(out.status.success());
    let score: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(score["recall"], 0.0);
    assert_eq!(score["precision"], 1.0);
}

#[test]
fn config_errors_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.json");
    fs::write(&cfg, r#"{"dt": 0.5}"#).unwrap();
    let out = owl(&["run", "--config", cfg.to_str().unwrap(), "--out", d.path().join("r").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = owl(&["run", "--config", d.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = owl(&["genworld", "--spec", cfg.to_str().unwrap(), "--seed", "1", "--out", d.path().join("x").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
