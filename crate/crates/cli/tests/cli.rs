use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use walkcollide::collisions::TestFunction;
use walkcollide::environment::{disorder_from_function, ContinuumAmplitude, EnvironmentField};

fn walkcollide(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_walkcollide")).args(args).current_dir(dir).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn report(dir: &Path, out: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(out).join("report.json")).unwrap()).unwrap()
}

const ZERO: &str = "seed = 42\n[walks]\nk = 3\nladder = [8, 32]\n[environment]\nalpha = 0.0\n[harness]\nreplicates = 40\nenv_replicates = 40\n";

#[test]
fn zero_duality_passes_with_unit_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "zero.toml", ZERO);
    let out = walkcollide(&["duality", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path(), "o");
    for row in r["report"]["results"]["duality"]["rows"].as_array().unwrap() {
        for key in ["exp_pi", "prod_x", "environment"] {
            assert_eq!(row[key]["mean"].as_f64(), Some(1.0), "{key}");
        }
    }
    assert!(r["report"]["verdicts"].as_array().unwrap().iter().all(|v| v["passed"] == Value::Bool(true)));
}

#[test]
fn one_step_partition_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p.toml", "[walks]\nladder = [1, 2]\n[harness]\nreplicates = 4\n");
    let out = walkcollide(&["partition", "--config", &cfg, "--seed", "7", "--out", "o"], dir.path());
    assert!(out.status.code().is_some_and(|c| c <= 1), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path(), "o");
    let results = &r["report"]["results"];
    let field = EnvironmentField::new(results["field_seed"].as_u64().unwrap());
    let amp = ContinuumAmplitude::sqrt_of(&TestFunction::gaussian_bump(1.0, 1.0)).unwrap();
    let a = disorder_from_function(&amp, 1);
    let closed = 1.0 + 0.5 * (a.at(1, 1) * field.omega_f64(1, 1) + a.at(1, -1) * field.omega_f64(1, -1));
    let value = results["rows"][0]["value"].as_f64().unwrap();
    assert!((value - closed).abs() <= 1e-15, "{value} vs {closed}");
}

#[test]
fn reports_are_identical_apart_from_the_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[walks]\nk = 3\nladder = [16, 64]\n[harness]\nreplicates = 200\n");
    for (out, workers) in [("a", "1"), ("b", "2")] {
        let o = walkcollide(&["convergence", "--config", &cfg, "--seed", "0x2a", "--out", out, "--workers", workers], dir.path());
        assert!(o.status.code().is_some_and(|c| c <= 1));
    }
    let read = |d: &str| std::fs::read_to_string(dir.path().join(d).join("report.json")).unwrap();
    let (a, b) = (read("a"), read("b"));
    let differing: Vec<(&str, &str)> = a.lines().zip(b.lines()).filter(|(x, y)| x != y).collect();
    assert_eq!(a.lines().count(), b.lines().count());
    assert!(differing.len() <= 1, "{differing:?}");
    assert!(differing.iter().all(|(x, _)| x.contains("\"timestamp\"")));
    assert_eq!(a.matches("\"timestamp\"").count(), 1);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert!(manifest["elapsed_seconds"].is_number());
    assert_eq!(manifest["seed"].as_u64(), Some(42));
    assert!(!a.contains("elapsed"));
}

#[test]
fn config_errors_exit_with_two_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.toml", "seed = 1\n[walks]\nladder = [64, 16]\n");
    let out = walkcollide(&["expmoment", "--config", &bad, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("walks.ladder"));

    let unknown = write_config(dir.path(), "unknown.toml", "seed = 1\n[chaos]\ngama = 0.5\n");
    let out = walkcollide(&["chaos", "--config", &unknown], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gama"));

    let out = walkcollide(&["expmoment"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn failing_verdict_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "t.toml",
        "[walks]\nladder = [16]\nm_ladder = [0.1]\n[harness]\nreplicates = 100\nthreshold = 1e-9\n",
    );
    let out = walkcollide(&["tightness", "--config", &cfg, "--seed", "3", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn stdout_and_raw_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[walks]\nhorizon = 64\n[harness]\nreplicates = 300\n");
    let out = walkcollide(&["collisions", "--config", &cfg, "--seed", "5", "--out", "o", "--raw", "--stdout"], dir.path());
    assert!(out.status.code().is_some_and(|c| c <= 1), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["manifest"]["command"], "collisions");
    assert_eq!(doc["report"]["schema"], 1);
    let csv = std::fs::read_to_string(dir.path().join("o/raw/collision_measure.csv")).unwrap();
    assert!(csv.starts_with("# artifact="));
    assert!(csv.lines().any(|l| l == "n,z,weight"));
    assert!(!csv.contains("timestamp"));
}
