use std::path::Path;
use std::process::{Command, Output};

fn mte(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mte")).args(args).env("MTE_WORKERS", "2").output().unwrap()
}

fn small_world(dir: &Path) -> std::path::PathBuf {
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/u_shaped_world.toml");
    let text = std::fs::read_to_string(shipped).unwrap().replace("states = 50", "states = 30").replace("agents_per_state = 400", "agents_per_state = 150");
    let path = dir.join("world.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn help_lists_subcommands() {
    let out = mte(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["simulate", "estimate", "bootstrap", "diagnose", "counterfactual"] {
        assert!(text.contains(cmd), "{text}");
    }
}

#[test]
fn missing_input_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out = mte(&["estimate", "--input", tmp.path().join("nope.csv").to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    let rec: serde_json::Value = serde_json::from_str(err.trim()).unwrap_or_else(|e| panic!("{e}: {err}"));
    assert_eq!(rec["status"], "error");
    assert!(!out_dir.exists());
}

#[test]
fn bad_window_is_rejected() {
    let out = mte(&["estimate", "--window", "0.7:0.2"]);
    assert!(!out.status.success());
}

#[test]
fn simulate_then_estimate() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    let out = mte(&["simulate", "--config", small_world(tmp.path()).to_str().unwrap(), "--out", sim.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let data = sim.join("dataset.csv");
    assert!(data.exists());

    let est = tmp.path().join("est");
    let out = mte(&["estimate", "--input", data.to_str().unwrap(), "--out", est.to_str().unwrap(), "--knots", "4", "--seed", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let listed = String::from_utf8(out.stdout).unwrap();
    assert!(listed.lines().any(|l| l.ends_with("mte_curve.csv")), "{listed}");
    let curve = std::fs::read_to_string(est.join("mte_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 43);
}
