use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn majam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_majam"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn convergence_writes_a_deterministic_trace() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let out = majam(&["convergence", "--seed", "7", "--out", arg(&a)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(majam(&["convergence", "--seed", "7", "--out", arg(&b)]).status.code(), Some(0));
    let text = fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("outer_iter,inner_iters,al_objective,gamma,max_delay,violation,kappa,eps2\n"));
    let rows = text.lines().count() - 1;
    assert!((1..=200).contains(&rows));
    assert_eq!(text, fs::read_to_string(&b).unwrap());
}

#[test]
fn missing_config_is_a_config_error() {
    let out = majam(&["sweep", "--config", "definitely/missing.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
}

#[test]
fn unknown_flag_prints_usage() {
    let out = majam(&["convergence", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(majam(&["sweep"]).status.code(), Some(1));
}

#[test]
fn bad_mode_is_rejected() {
    let out = majam(&["convergence", "--mode", "teleport"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_output_does_not_depend_on_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"name": "pj", "variable": "jammer_power_dbm", "values": [-5, 10],
            "modes": ["local-only", "fpa"], "seeds": [0, 1],
            "config": {"rx_antennas": 4}}"#,
    )
    .unwrap();
    let serial = dir.path().join("serial");
    let parallel = dir.path().join("parallel");
    for (d, jobs) in [(&serial, "1"), (&parallel, "3")] {
        let out = majam(&["sweep", "--config", arg(&spec), "--out", arg(d), "--jobs", jobs]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["pj_summary.csv", "pj_records.csv"] {
        assert_eq!(
            fs::read_to_string(serial.join(f)).unwrap(),
            fs::read_to_string(parallel.join(f)).unwrap()
        );
    }
    let summary = fs::read_to_string(serial.join("pj_summary.csv")).unwrap();
    // local-only delays do not see the jammer
    let local: Vec<&str> = summary
        .lines()
        .filter(|l| l.contains(",local-only,"))
        .map(|l| l.split(',').nth(2).unwrap())
        .collect();
    assert_eq!(local, ["2.5", "2.5"]);
    let manifest = fs::read_to_string(serial.join("pj_manifest.json")).unwrap();
    assert!(manifest.contains("\"crate_version\""));
}

#[test]
fn invalid_spec_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"name": "x", "variable": "mec_budget", "values": []}"#).unwrap();
    assert_eq!(majam(&["sweep", "--config", arg(&spec)]).status.code(), Some(1));
}

#[test]
fn validate_small_states() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"config": {"rx_antennas": 4}}"#).unwrap();
    let out = majam(&["validate", "--config", arg(&cfg), "--states", "3", "--seed", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("all invariants hold"));
}

#[test]
fn oracle_tables() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("oracle.json");
    let out = majam(&["oracle", "--instances", "5", "--channel-instances", "20", "--out", arg(&json)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("update_interference_aux"));
    assert!(!text.contains("FAIL"));
    assert!(fs::read_to_string(json).unwrap().contains("\"blocks\""));
}
