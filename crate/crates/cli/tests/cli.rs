use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn dosr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dosr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

fn out_dir(dir: &tempfile::TempDir) -> String {
    dir.path().to_string_lossy().into_owned()
}

#[test]
fn simulate_writes_csv_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let o = dosr(&["simulate", "example2", "-o", &out_dir(&dir), "--tend", "5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("example2.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,agent,y,z,lambda,u,eta_err"));
    // 5 s at dt 1e-3, every 10th step, 4 agents
    assert_eq!(csv.lines().count(), 1 + 501 * 4);
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 7);
    assert_eq!(row[0], "0.0000000000e+00");
    let metrics: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("example2.metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["law"], "state_feedback");
    assert_eq!(metrics["axes"].as_array().unwrap().len(), 1);
    assert!(metrics["axes"][0]["max_mean_v_drift"].as_f64().unwrap() < 1e-8);
}

#[test]
fn example1_writes_one_csv_per_axis() {
    let dir = tempfile::tempdir().unwrap();
    let o = dosr(&["simulate", "example1", "-o", &out_dir(&dir), "--tend", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("example1_axis1.csv").exists());
    assert!(dir.path().join("example1_axis2.csv").exists());
    assert!(dir.path().join("example1.metrics.json").exists());
}

#[test]
fn rerun_with_same_seed_is_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = dosr(&["simulate", "example3", "-o", &out_dir(d), "--tend", "2", "--seed", "7"]);
        assert_eq!(code(&o), 0);
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("example3.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let c = tempfile::tempdir().unwrap();
    dosr(&["simulate", "example3", "-o", &out_dir(&c), "--tend", "2", "--seed", "8"]);
    assert_ne!(read(&a), read(&c));
}

#[test]
fn disconnected_graph_is_an_assumption_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = dosr(&["simulate", &fixture("disconnected.json"), "-o", &out_dir(&dir)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("connected"));
    let o = dosr(&["check", &fixture("disconnected.json")]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL  network   connectivity"));
}

#[test]
fn malformed_json_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ \"graph\": [1, 2").unwrap();
    let o = dosr(&["simulate", bad.to_str().unwrap(), "-o", &out_dir(&dir)]);
    assert_eq!(code(&o), 2);
    let missing = dosr(&["check", "/nonexistent/scenario.json"]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn unknown_field_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = dosr_cli::scenario::bundled("example2")
        .unwrap()
        .replace("\"decimate\"", "\"decimation\"");
    let path = dir.path().join("typo.json");
    std::fs::write(&path, text).unwrap();
    assert_eq!(code(&dosr(&["check", path.to_str().unwrap()])), 2);
}

#[test]
fn nonminimum_phase_plant_fails_check_and_blocks_simulate() {
    let o = dosr(&["check", &fixture("nonminimum_phase.json")]);
    assert_eq!(code(&o), 3);
    let text = String::from_utf8_lossy(&o.stdout);
    let line = text
        .lines()
        .find(|l| l.contains("agent 1") && l.contains("minimum phase"))
        .unwrap();
    assert!(line.starts_with("FAIL"), "{line}");
    let dir = tempfile::tempdir().unwrap();
    let o = dosr(&["simulate", &fixture("nonminimum_phase.json"), "-o", &out_dir(&dir)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));
}

#[test]
fn bundled_scenarios_pass_check() {
    for name in ["example1", "example2", "example3"] {
        let o = dosr(&["check", name]);
        assert_eq!(code(&o), 0, "{name}: {}", String::from_utf8_lossy(&o.stdout));
        assert!(!String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    }
}

#[test]
fn divergence_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let o = dosr(&["simulate", &fixture("divergent.json"), "-o", &out_dir(&dir)]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn step_too_large_for_high_gain_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = dosr(&["simulate", "example3", "-o", &out_dir(&dir), "--dt", "0.01"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn oracle_reports_inventory_optimum() {
    let o = dosr(&["oracle", "example2"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    let axis = &v["axes"][0];
    assert!((axis["theta"].as_f64().unwrap() - 0.864).abs() < 1e-9);
    for (got, want) in axis["y"].as_array().unwrap().iter().zip([4.57, 2.41, 1.69, 1.33]) {
        assert!((got.as_f64().unwrap() - want).abs() < 1e-9);
    }
    assert!(axis["constraint_residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn oracle_on_example3_matches_reported_optimum() {
    let v = stdout_json(&dosr(&["oracle", "example3"]));
    for (got, want) in v["axes"][0]["y"].as_array().unwrap().iter().zip([2.2, 0.7, 2.0, 5.1]) {
        assert!((got.as_f64().unwrap() - want).abs() < 0.1);
    }
}

#[test]
fn synthesize_reports_gains_and_residuals() {
    let o = dosr(&["synthesize", "example3"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["law"], "realtime_gradient");
    for a in v["agents"].as_array().unwrap() {
        assert!(a["residuals"]["disturbance_block"].as_f64().unwrap() <= 1e-10);
        assert!(a["residuals"]["output_block"].as_f64().unwrap() <= 1e-10);
        assert!(a["abscissas"]["worst"].as_f64().unwrap() < 0.0);
    }
}

#[test]
fn cli_overrides_beat_the_file() {
    let v = stdout_json(&dosr(&["synthesize", "example2", "--poles-k1", "-3"]));
    assert!((v["agents"][0]["gains"]["K1"][0][0].as_f64().unwrap() + 3.0).abs() < 1e-12);
    let v = stdout_json(&dosr(&["synthesize", "example3", "--eps", "0.2"]));
    assert_eq!(v["eps"].as_f64(), Some(0.2));
    let v = stdout_json(&dosr(&["synthesize", "example2", "--poles-lbar", "-4"]));
    assert!((v["agents"][2]["abscissas"]["disturbance_observer"].as_f64().unwrap() + 4.0).abs() < 1e-9);
    // agent 2 of example3 has a scalar exosystem, so two observer poles cannot fit it
    assert_eq!(
        code(&dosr(&["synthesize", "example3", "--poles-lbar", "-4-1i,-4+1i"])),
        2
    );
}

#[test]
fn eps_sweep_runs_each_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = dosr(&[
        "simulate",
        "example3",
        "-o",
        &out_dir(&dir),
        "--tend",
        "2",
        "--sweep",
        "eps=0.5,0.2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("example3.sweep.json")).unwrap()).unwrap();
    let runs = summary["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[0]["eps"].as_f64(), Some(0.5));
    let files: Vec<PathBuf> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert!(files.iter().any(|p| p.ends_with("example3_eps0.2.csv")));
    assert!(files.iter().any(|p| p.ends_with("example3_eps0.5.metrics.json")));
}
