use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ExperimentConfig, InvestorType};
use super::run::{Provenance, RunArtifact, PARAMETERS};
use super::summary::{summarize, CoverageRow, RecoveryRow, RegretQuantileRow, ShockLossRow, Summaries, ALL_TYPES};
use crate::error::{Error, Result};

/// Shortest round-trip decimal form.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Create `dir`, refusing an existing path unless `force` is set.
pub fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && !force {
        return Err(Error::OutputExists(dir.to_path_buf()));
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

pub(crate) fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    config: &'a ExperimentConfig,
    provenance: &'a Provenance,
    types: &'a [InvestorType],
}

pub const TRIALS_HEADER: [&str; 31] = [
    "trial", "type", "shock", "status", "rho_true", "tau_true", "eta_true", "rho_hat", "tau_hat", "eta_hat", "loss",
    "grid_evals", "rho_var", "tau_var", "eta_var", "np_rho_lo", "np_rho_hi", "np_tau_lo", "np_tau_hi", "np_eta_lo",
    "np_eta_hi", "p_rho_lo", "p_rho_hi", "p_tau_lo", "p_tau_hi", "p_eta_lo", "p_eta_hi", "test_regret", "welfare_loss",
    "rho_path_mae", "error",
];

pub const RECOVERY_HEADER: [&str; 5] = ["parameter", "bias", "variance", "mse", "coverage"];

pub const COVERAGE_HEADER: [&str; 10] = [
    "scope", "shock", "parameter", "coverage", "calibration_error", "mean_length", "std_length", "median_length",
    "max_length", "efficiency",
];

pub const REGRET_QUANTILES_HEADER: [&str; 6] = ["type", "shock", "t", "median", "q25", "q75"];

pub const SHOCK_LOSSES_HEADER: [&str; 8] = ["type", "shock", "trials", "mean", "std", "median", "q25", "q75"];

fn trial_rows(artifact: &RunArtifact) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for t in &artifact.trials {
        let label = artifact.type_label(t).to_string();
        let truth: Vec<String> = t.truth.iter().map(|v| fmt_f64(*v)).collect();
        if let Some(err) = &t.error {
            let mut row = vec![t.trial.to_string(), label, String::new(), "failed".into()];
            row.extend(truth);
            row.resize(TRIALS_HEADER.len() - 1, String::new());
            row.push(err.clone());
            rows.push(row);
            continue;
        }
        for s in &t.scenarios {
            let mut row = vec![t.trial.to_string(), label.clone(), s.shock.label(), "ok".into()];
            row.extend(truth.iter().cloned());
            row.extend(s.estimate.iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(s.loss));
            row.push(s.grid_evals.to_string());
            row.extend(s.local_variance.iter().map(|v| fmt_f64(*v)));
            for a in 0..3 {
                match &s.np_intervals {
                    Some(iv) => row.extend([fmt_f64(iv[a].lo), fmt_f64(iv[a].hi)]),
                    None => row.extend([String::new(), String::new()]),
                }
            }
            for iv in &s.p_intervals {
                row.extend([fmt_f64(iv.lo), fmt_f64(iv.hi)]);
            }
            row.push(fmt_f64(s.test_regret.iter().sum()));
            row.push(fmt_opt(s.welfare_loss));
            row.push(fmt_opt(s.rho_path_mae));
            row.push(String::new());
            rows.push(row);
        }
    }
    rows
}

/// Write the full artifact set into `dir` and return the summaries.
pub fn emit(artifact: &RunArtifact, dir: &Path, force: bool) -> Result<Summaries> {
    prepare_dir(dir, force)?;
    let summaries = summarize(artifact)?;
    write_json(
        &dir.join("config.json"),
        &ConfigEcho {
            config: &artifact.config,
            provenance: &artifact.provenance,
            types: &artifact.types,
        },
    )?;
    write_csv(&dir.join("trials.csv"), &TRIALS_HEADER, trial_rows(artifact))?;

    let mut paths = Vec::new();
    for t in artifact.trials.iter().filter(|t| t.succeeded()) {
        for s in &t.scenarios {
            let mut cum = 0.0;
            for (i, r) in s.test_regret.iter().enumerate() {
                cum += r;
                paths.push(vec![
                    t.trial.to_string(),
                    artifact.type_label(t).to_string(),
                    s.shock.label(),
                    (i + 1).to_string(),
                    fmt_f64(*r),
                    fmt_f64(cum),
                ]);
            }
        }
    }
    write_csv(&dir.join("regret_paths.csv"), &["trial", "type", "shock", "t", "regret", "cumulative"], paths)?;
    write_summaries(&summaries, dir)?;
    write_plotdata(artifact, &summaries, &dir.join("plotdata"))?;
    Ok(summaries)
}

/// Every summary table into `dir`.
pub fn write_summaries(s: &Summaries, dir: &Path) -> Result<()> {
    write_recovery(&s.recovery, dir)?;
    write_coverage(&s.coverage, dir)?;
    write_regret_quantiles(&s.regret_quantiles, dir)?;
    write_shock_losses(&s.shock_losses, dir)
}

pub fn write_recovery(rows: &[RecoveryRow], dir: &Path) -> Result<()> {
    write_csv(
        &dir.join("recovery.csv"),
        &RECOVERY_HEADER,
        rows.iter().map(|r| {
            vec![
                r.parameter.clone(),
                fmt_f64(r.stats.bias),
                fmt_f64(r.stats.variance),
                fmt_f64(r.stats.mse),
                fmt_opt(r.coverage),
            ]
        }),
    )
}

pub fn write_coverage(rows: &[CoverageRow], dir: &Path) -> Result<()> {
    write_csv(
        &dir.join("coverage.csv"),
        &COVERAGE_HEADER,
        rows.iter().map(|r| {
            let c = &r.report;
            vec![
                r.scope.clone(),
                r.shock.clone(),
                r.parameter.clone(),
                fmt_f64(c.coverage),
                fmt_f64(c.calibration_error),
                fmt_f64(c.mean_length),
                fmt_f64(c.std_length),
                fmt_f64(c.median_length),
                fmt_f64(c.max_length),
                fmt_f64(c.efficiency),
            ]
        }),
    )
}

pub fn write_regret_quantiles(rows: &[RegretQuantileRow], dir: &Path) -> Result<()> {
    write_csv(
        &dir.join("regret_quantiles.csv"),
        &REGRET_QUANTILES_HEADER,
        rows.iter().map(|r| {
            vec![
                r.type_label.clone(),
                r.shock.clone(),
                r.t.to_string(),
                fmt_f64(r.median),
                fmt_f64(r.q25),
                fmt_f64(r.q75),
            ]
        }),
    )
}

pub fn write_shock_losses(rows: &[ShockLossRow], dir: &Path) -> Result<()> {
    write_csv(
        &dir.join("shock_losses.csv"),
        &SHOCK_LOSSES_HEADER,
        rows.iter().map(|r| {
            vec![
                r.type_label.clone(),
                r.shock.clone(),
                r.trials.to_string(),
                fmt_f64(r.mean),
                fmt_f64(r.std),
                fmt_f64(r.median),
                fmt_f64(r.q25),
                fmt_f64(r.q75),
            ]
        }),
    )
}

/// One file per figure: recovery scatter, interval lengths, pooled regret
/// bands and per-trial welfare losses.
fn write_plotdata(artifact: &RunArtifact, s: &Summaries, dir: &PathBuf) -> Result<()> {
    fs::create_dir_all(dir)?;
    let ok: Vec<_> = artifact.trials.iter().filter(|t| t.succeeded()).collect();

    let mut scatter = Vec::new();
    let mut lengths = Vec::new();
    let mut losses = Vec::new();
    for t in &ok {
        let label = artifact.type_label(t);
        for (a, name) in PARAMETERS.iter().enumerate() {
            scatter.push(vec![
                t.trial.to_string(),
                label.to_string(),
                name.to_string(),
                fmt_f64(t.truth[a]),
                fmt_f64(t.scenarios[0].estimate[a]),
            ]);
        }
        for sc in &t.scenarios {
            for (a, name) in PARAMETERS.iter().enumerate() {
                lengths.push(vec![
                    t.trial.to_string(),
                    label.to_string(),
                    sc.shock.label(),
                    name.to_string(),
                    fmt_f64(sc.p_intervals[a].length()),
                ]);
            }
            if let Some(l) = sc.welfare_loss {
                losses.push(vec![t.trial.to_string(), label.to_string(), sc.shock.label(), fmt_f64(l)]);
            }
        }
    }
    write_csv(&dir.join("recovery_scatter.csv"), &["trial", "type", "parameter", "truth", "estimate"], scatter)?;
    write_csv(&dir.join("interval_lengths.csv"), &["trial", "type", "shock", "parameter", "length"], lengths)?;
    write_csv(&dir.join("welfare_losses.csv"), &["trial", "type", "shock", "welfare_loss"], losses)?;
    write_csv(
        &dir.join("regret_bands.csv"),
        &["shock", "t", "median", "q25", "q75"],
        s.regret_quantiles.iter().filter(|r| r.type_label == ALL_TYPES).map(|r| {
            vec![
                r.shock.clone(),
                r.t.to_string(),
                fmt_f64(r.median),
                fmt_f64(r.q25),
                fmt_f64(r.q75),
            ]
        }),
    )
}
