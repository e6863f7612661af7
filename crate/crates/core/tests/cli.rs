mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use common::fixture;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spillover-iv"))
        .args(args)
        .env_remove("SPILLOVER_IV_WORKERS")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

fn simulate_fixture(dir: &Path, name: &str, groups: &str) -> std::path::PathBuf {
    let out = dir.join(format!("{name}.csv"));
    let r = run(&["simulate", "--spec", s(&fixture(name)), "--output", s(&out), "--groups", groups]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    out
}

#[test]
fn verify_bundled_spec_passes() {
    let r = run(&["verify", "--spec", s(&fixture("uniform_types.toml"))]);
    assert_eq!(r.status.code(), Some(0));
    let out = String::from_utf8_lossy(&r.stdout);
    assert!(out.contains("0 failed"), "{out}");
}

#[test]
fn verify_random_specs_passes() {
    let r = run(&["verify", "--random", "200", "--seed", "9"]);
    assert_eq!(r.status.code(), Some(0));
}

#[test]
fn estimate_recovers_truth_manifest_lates() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate_fixture(dir.path(), "calibration.toml", "8000");
    let json = dir.path().join("r.json");
    let r = run(&["estimate", "--input", s(&csv), "--output", s(&json)]);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stdout).contains("late_direct"));
    let report = read_json(&json);
    let truth = read_json(Path::new(&format!("{}.truth.json", csv.display())));
    for name in ["late_direct", "late_indirect"] {
        let row = report["estimates"].as_array().unwrap().iter().find(|r| r["name"] == name).unwrap();
        let t = truth["values"][name].as_f64().unwrap();
        let (v, se) = (row["value"].as_f64().unwrap(), row["se"].as_f64().unwrap());
        assert!((v - t).abs() < 4.0 * se, "{name}: {v} vs {t}");
    }
}

#[test]
fn estimate_routes_osn_violation_to_omissions() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate_fixture(dir.path(), "uniform_types.toml", "1000");
    let r = run(&["estimate", "--input", s(&csv)]);
    assert_eq!(r.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&r.stdout).unwrap();
    let omitted = report["omitted"].as_array().unwrap();
    let reason = |n: &str| omitted.iter().find(|o| o["name"] == n).map(|o| o["reason"].clone());
    assert_eq!(reason("late_direct"), Some(Value::from("osn_violated")));
    assert_eq!(reason("het_peer"), Some(Value::from("osn_violated")));
    let names: Vec<_> = report["estimates"].as_array().unwrap().iter().map(|r| r["name"].clone()).collect();
    for n in ["p_at", "p_sc", "itt_direct_0", "itt_total"] {
        assert!(names.contains(&Value::from(n)), "{n}");
    }
    // The table goes to stderr when JSON takes stdout.
    assert!(String::from_utf8_lossy(&r.stderr).contains("itt_total"));
}

#[test]
fn identical_inputs_give_identical_json() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate_fixture(dir.path(), "calibration.toml", "2000");
    let a = run(&["estimate", "--input", s(&csv), "--workers", "1"]);
    let b = run(&["estimate", "--input", s(&csv), "--workers", "3"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let m1 = run(&["mc-study", "--spec", s(&fixture("calibration.toml")), "--reps", "8", "--groups", "300", "--workers", "1"]);
    let m2 = run(&["mc-study", "--spec", s(&fixture("calibration.toml")), "--reps", "8", "--groups", "300", "--workers", "4"]);
    assert!(m1.status.success());
    assert_eq!(m1.stdout, m2.stdout);
}

#[test]
fn mc_study_emits_calibration_fields() {
    let r = run(&[
        "mc-study",
        "--spec",
        s(&fixture("calibration.toml")),
        "--reps",
        "10",
        "--groups",
        "400",
        "--estimands",
        "mean_y_00,late_direct",
    ]);
    assert_eq!(r.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&r.stdout).unwrap();
    let est = v["estimands"].as_array().unwrap();
    assert_eq!(est.len(), 2);
    for k in ["bias", "mc_sd", "mean_se", "coverage", "n_reps"] {
        assert!(est[1].get(k).is_some(), "{k}");
    }
    assert_eq!(v["replications"], 10);
}

#[test]
fn describe_prints_counts_and_osn() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate_fixture(dir.path(), "application_like.toml", "600");
    let r = run(&["describe", "--input", s(&csv)]);
    assert_eq!(r.status.code(), Some(0));
    let out = String::from_utf8_lossy(&r.stdout);
    assert!(out.contains("households: 600"));
    assert!(out.contains("(1,1)"));
    assert!(out.contains("consistent"));
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    assert_eq!(run(&["estimate", "--input", s(&missing)]).status.code(), Some(3));
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "household,unit,z,d,y\na,1,2,0,1\na,2,0,0,1\n").unwrap();
    let r = run(&["estimate", "--input", s(&bad)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("z"));
    let ok = simulate_fixture(dir.path(), "calibration.toml", "100");
    assert_eq!(run(&["estimate", "--input", s(&ok), "--ci-level", "1.5"]).status.code(), Some(1));
    assert_eq!(run(&["estimate", "--input", s(&ok), "--design-probs", "0.5,0.5"]).status.code(), Some(1));
    assert_eq!(run(&["verify", "--spec", s(&bad)]).status.code(), Some(1));
    assert_eq!(run(&["nonsense"]).status.code(), Some(1));
}

#[test]
fn config_file_wins_over_flags_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate_fixture(dir.path(), "calibration.toml", "500");
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "ci_level = 0.9\nestimands = [\"late\"]\n").unwrap();
    let r = run(&["estimate", "--input", s(&csv), "--config", s(&cfg), "--ci-level", "0.99"]);
    assert_eq!(r.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(v["ci_level"], 0.9);
    assert_eq!(v["estimates"].as_array().unwrap().len(), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("config file overrides --ci-level"));
    std::fs::write(&cfg, "colour = 1\n").unwrap();
    assert_eq!(run(&["estimate", "--input", s(&csv), "--config", s(&cfg)]).status.code(), Some(1));
}

#[test]
fn workers_default_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w.csv");
    let r = Command::new(env!("CARGO_BIN_EXE_spillover-iv"))
        .args(["simulate", "--spec", s(&fixture("uniform_types.toml")), "--output", s(&out), "--groups", "50"])
        .env("SPILLOVER_IV_WORKERS", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn known_design_flag_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate_fixture(dir.path(), "calibration.toml", "500");
    let r = run(&["estimate", "--input", s(&csv), "--design-probs", "0.3,0.25,0.25,0.2", "--small-sample", "--clamp-shares", "--h-block", "full-8"]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let r = run(&["estimate", "--input", s(&csv), "--h-block", "bogus"]);
    assert_eq!(r.status.code(), Some(1));
}
