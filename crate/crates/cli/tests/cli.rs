use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn invport(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_invport")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn prices() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/two_asset_regimes.csv")
        .display()
        .to_string()
}

const SMALL: &str = r#"{"n": 4, "k": 2, "periods": 20, "trials": 4, "bootstrap": {"b_nonparam": 10, "b_param": 20}}"#;

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&invport(&["--help"])), 0);
    assert_eq!(code(&invport(&["--version"])), 0);
    assert_eq!(code(&invport(&["experiment", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&invport(&[])), 1);
    assert_eq!(code(&invport(&["bogus"])), 1);
    assert_eq!(code(&invport(&["experiment", "--workers", "many"])), 1);
    let bad = write(dir.path(), "bad.json", r#"{"split_ratio": 2.0}"#);
    let out = dir.path().join("o").display().to_string();
    assert_eq!(code(&invport(&["experiment", "--config", bad.to_str().unwrap(), "--out", &out])), 1);
    let unknown = write(dir.path(), "unknown.json", r#"{"nope": 1}"#);
    assert_eq!(code(&invport(&["experiment", "--config", unknown.to_str().unwrap(), "--out", &out])), 1);
}

#[test]
fn existing_output_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = invport(&["realdata", "--prices", &prices(), "--out", &out]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    let o = invport(&["realdata", "--prices", &prices(), "--out", &out, "--force"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("summary.csv").exists());
    assert!(dir.path().join("block_2022-2024.csv").exists());
}

#[test]
fn runtime_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let short = write(dir.path(), "short.csv", "date,A,B\n2020-01-02,1,2\n2020-01-03,1.1,2.1\n");
    let out = dir.path().join("o").display().to_string();
    assert_eq!(code(&invport(&["realdata", "--prices", short.to_str().unwrap(), "--out", &out])), 2);
}

#[test]
fn simulate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "gen.json",
        r#"{"n": 4, "k": 2, "periods": 15, "investor": {"kind": "fixed", "rho": 3.0, "tau": 0.1, "eta": 0.5}}"#,
    );
    let sim = dir.path().join("sim").display().to_string();
    let o = invport(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "7", "--out", &sim]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let data = dir.path().join("sim/dataset.json").display().to_string();
    let est = dir.path().join("est").display().to_string();
    let o = invport(&["estimate", "--data", &data, "--bootstrap", "10", "--out", &est]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("est/estimate.json")).unwrap()).unwrap();
    assert_eq!((v["rho"].as_f64(), v["tau"].as_f64(), v["eta"].as_f64()), (Some(3.0), Some(0.1), Some(0.5)));
    assert_eq!(v["intervals"].as_array().unwrap().len(), 3);
}

#[test]
fn experiment_coverage_and_shock_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.json", SMALL);
    let cfg = cfg.to_str().unwrap();
    for (cmd, files) in [
        ("experiment", &["config.json", "trials.csv", "recovery.csv", "coverage.csv", "plotdata/regret_bands.csv"][..]),
        ("coverage", &["recovery.csv", "coverage.csv"][..]),
        ("shock", &["shock_losses.csv"][..]),
    ] {
        let out = dir.path().join(cmd);
        let o = invport(&[cmd, "--config", cfg, "--out", out.to_str().unwrap(), "--workers", "2"]);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        for f in files {
            assert!(out.join(f).exists(), "{cmd} missing {f}");
        }
    }
}

#[test]
fn regret_study_runs_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "regret.json", r#"{"sizes": [6, 12], "seeds": 2, "n": 4, "k": 2}"#);
    let out = dir.path().join("r");
    let o = invport(&["regret", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("regret.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
}
