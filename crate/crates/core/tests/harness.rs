use std::collections::HashMap;
use std::path::Path;

use invport::harness::{
    emit, provenance, run_experiment, ExperimentConfig, RunArtifact, TrialRecord, COVERAGE_HEADER, RECOVERY_HEADER,
    REGRET_QUANTILES_HEADER, SHOCK_LOSSES_HEADER, TRIALS_HEADER,
};
use invport::Error;

fn small_config() -> ExperimentConfig {
    serde_json::from_str(r#"{"n": 4, "k": 2, "periods": 20, "trials": 8, "bootstrap": {"b_nonparam": 10, "b_param": 20}}"#)
        .unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<HashMap<String, String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| header.iter().cloned().zip(rec.unwrap().iter().map(str::to_string)).collect())
        .collect();
    (header, rows)
}

fn num(row: &HashMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

#[test]
fn recovery_table_recomputes_from_trial_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    emit(&run_experiment(&small_config(), 1).unwrap(), &out, false).unwrap();

    let (header, trials) = read_csv(&out.join("trials.csv"));
    assert_eq!(header, TRIALS_HEADER);
    let base: Vec<_> = trials.iter().filter(|r| r["shock"] == "baseline" && r["status"] == "ok").collect();
    assert_eq!(base.len(), 8);

    let (header, recovery) = read_csv(&out.join("recovery.csv"));
    assert_eq!(header, RECOVERY_HEADER);
    for row in &recovery {
        let p = &row["parameter"];
        let errors: Vec<f64> = base.iter().map(|r| num(r, &format!("{p}_hat")) - num(r, &format!("{p}_true"))).collect();
        let n = errors.len() as f64;
        let bias = errors.iter().sum::<f64>() / n;
        let variance = errors.iter().map(|e| (e - bias).powi(2)).sum::<f64>() / n;
        let covered = base
            .iter()
            .filter(|r| {
                let t = num(r, &format!("{p}_true"));
                num(r, &format!("np_{p}_lo")) <= t && t <= num(r, &format!("np_{p}_hi"))
            })
            .count() as f64
            / n;
        assert!((num(row, "bias") - bias).abs() < 1e-12, "{p} bias");
        assert!((num(row, "variance") - variance).abs() < 1e-12, "{p} variance");
        assert!((num(row, "mse") - (bias * bias + variance)).abs() < 1e-12, "{p} mse");
        assert_eq!(num(row, "coverage"), covered, "{p} coverage");
    }

    let (header, losses) = read_csv(&out.join("shock_losses.csv"));
    assert_eq!(header, SHOCK_LOSSES_HEADER);
    for row in losses.iter().filter(|r| r["type"] == "all") {
        let vals: Vec<f64> = trials
            .iter()
            .filter(|r| r["shock"] == row["shock"] && r["status"] == "ok")
            .map(|r| num(r, "welfare_loss"))
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert_eq!(num(row, "trials") as usize, vals.len());
        assert!((num(row, "mean") - mean).abs() < 1e-12);
    }
}

#[test]
fn existing_output_requires_force() {
    let dir = tempfile::tempdir().unwrap();
    let artifact = run_experiment(&small_config(), 1).unwrap();
    let out = dir.path().join("run");
    emit(&artifact, &out, false).unwrap();
    assert!(matches!(emit(&artifact, &out, false), Err(Error::OutputExists(_))));
    emit(&artifact, &out, true).unwrap();
}

#[test]
fn empty_trial_list_writes_headers_only() {
    let config = small_config();
    let artifact = RunArtifact {
        provenance: provenance(&config).unwrap(),
        types: config.investor_types().unwrap(),
        config,
        trials: Vec::new(),
    };
    let dir = tempfile::tempdir().unwrap();
    emit(&artifact, dir.path(), true).unwrap();
    for (file, header) in [
        ("trials.csv", &TRIALS_HEADER[..]),
        ("recovery.csv", &RECOVERY_HEADER[..]),
        ("coverage.csv", &COVERAGE_HEADER[..]),
        ("regret_quantiles.csv", &REGRET_QUANTILES_HEADER[..]),
        ("shock_losses.csv", &SHOCK_LOSSES_HEADER[..]),
    ] {
        let (h, rows) = read_csv(&dir.path().join(file));
        assert_eq!(h, header, "{file}");
        assert!(rows.is_empty(), "{file}");
    }
}

#[test]
fn failed_trials_are_reported_and_excluded() {
    let mut artifact = run_experiment(&small_config(), 1).unwrap();
    artifact.trials[0] = TrialRecord {
        scenarios: Vec::new(),
        error: Some("trial 0: injected".into()),
        ..artifact.trials[0].clone()
    };
    let dir = tempfile::tempdir().unwrap();
    let summaries = emit(&artifact, dir.path(), true).unwrap();
    let (_, trials) = read_csv(&dir.path().join("trials.csv"));
    let failed: Vec<_> = trials.iter().filter(|r| r["status"] == "failed").collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0]["error"], "trial 0: injected");
    let pooled = summaries
        .shock_losses
        .iter()
        .find(|r| r.type_label == "all")
        .unwrap();
    assert_eq!(pooled.trials, 7);
}

#[test]
fn config_echo_carries_provenance() {
    let config = small_config();
    let dir = tempfile::tempdir().unwrap();
    emit(&run_experiment(&config, 1).unwrap(), dir.path(), true).unwrap();
    let echo: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["provenance"]["master_seed"], config.master_seed);
    assert_eq!(echo["types"].as_array().unwrap().len(), 10);
    let other = ExperimentConfig {
        master_seed: 1,
        ..config.clone()
    };
    assert_ne!(provenance(&config).unwrap().config_hash, provenance(&other).unwrap().config_hash);
}
