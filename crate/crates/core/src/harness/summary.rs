use serde::{Deserialize, Serialize};

use super::run::{RunArtifact, ScenarioRecord, PARAMETERS};
use crate::error::Result;
use crate::stats::{coverage_report_against, mean, quantile, summarize_against, ConfidenceInterval, CoverageReport, SummaryStats};

/// Label used for rows pooling every investor type.
pub const ALL_TYPES: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub parameter: String,
    pub stats: SummaryStats,
    /// Nonparametric bootstrap coverage; `None` without intervals.
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    /// [`ALL_TYPES`] or a type label.
    pub scope: String,
    pub shock: String,
    pub parameter: String,
    pub report: CoverageReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretQuantileRow {
    pub type_label: String,
    pub shock: String,
    /// 1-based index into the test split.
    pub t: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockLossRow {
    pub type_label: String,
    pub shock: String,
    pub trials: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summaries {
    pub recovery: Vec<RecoveryRow>,
    pub coverage: Vec<CoverageRow>,
    pub regret_quantiles: Vec<RegretQuantileRow>,
    pub shock_losses: Vec<ShockLossRow>,
}

/// Successful (type label, truth, scenario) triples for scenario `s`,
/// in trial order.
fn scenario_rows<'a>(artifact: &'a RunArtifact, s: usize, scope: Option<&str>) -> Vec<(&'a str, [f64; 3], &'a ScenarioRecord)> {
    artifact
        .trials
        .iter()
        .filter(|t| t.succeeded())
        .filter(|t| scope.is_none_or(|l| artifact.type_label(t) == l))
        .map(|t| (artifact.type_label(t), t.truth, &t.scenarios[s]))
        .collect()
}

/// Pooled scope followed by each type label.
fn scopes(artifact: &RunArtifact) -> Vec<Option<&str>> {
    std::iter::once(None)
        .chain(artifact.types.iter().map(|t| Some(t.label.as_str())))
        .collect()
}

fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

pub(crate) fn loss_row(type_label: &str, shock: &str, losses: &[f64]) -> ShockLossRow {
    ShockLossRow {
        type_label: type_label.to_string(),
        shock: shock.to_string(),
        trials: losses.len(),
        mean: mean(losses),
        std: population_std(losses),
        median: quantile(losses, 0.5),
        q25: quantile(losses, 0.25),
        q75: quantile(losses, 0.75),
    }
}

/// Every summary table, computed only from the per-trial records.
pub fn summarize(artifact: &RunArtifact) -> Result<Summaries> {
    let scenarios = artifact.config.scenarios();
    let mut out = Summaries {
        recovery: Vec::new(),
        coverage: Vec::new(),
        regret_quantiles: Vec::new(),
        shock_losses: Vec::new(),
    };

    let base = scenario_rows(artifact, 0, None);
    if !base.is_empty() {
        for (a, name) in PARAMETERS.iter().enumerate() {
            let est: Vec<f64> = base.iter().map(|(_, _, s)| s.estimate[a]).collect();
            let truth: Vec<f64> = base.iter().map(|(_, t, _)| t[a]).collect();
            let intervals: Option<Vec<ConfidenceInterval>> =
                base.iter().map(|(_, _, s)| s.np_intervals.as_ref().map(|v| v[a])).collect();
            let coverage = match intervals {
                Some(iv) => Some(coverage_report_against(&iv, &truth)?.coverage),
                None => None,
            };
            out.recovery.push(RecoveryRow {
                parameter: name.to_string(),
                stats: summarize_against(&est, &truth)?,
                coverage,
            });
        }
    }

    for scope in scopes(artifact) {
        let label = scope.unwrap_or(ALL_TYPES);
        for (s, shock) in scenarios.iter().enumerate() {
            let rows = scenario_rows(artifact, s, scope);
            if rows.is_empty() {
                continue;
            }
            for (a, name) in PARAMETERS.iter().enumerate() {
                let intervals: Vec<ConfidenceInterval> = rows.iter().map(|(_, _, r)| r.p_intervals[a]).collect();
                let truth: Vec<f64> = rows.iter().map(|(_, t, _)| t[a]).collect();
                out.coverage.push(CoverageRow {
                    scope: label.to_string(),
                    shock: shock.label(),
                    parameter: name.to_string(),
                    report: coverage_report_against(&intervals, &truth)?,
                });
            }

            let paths: Vec<Vec<f64>> = rows
                .iter()
                .map(|(_, _, r)| {
                    r.test_regret
                        .iter()
                        .scan(0.0, |acc, v| {
                            *acc += v;
                            Some(*acc)
                        })
                        .collect()
                })
                .collect();
            let len = paths.iter().map(Vec::len).min().unwrap_or(0);
            for t in 0..len {
                let column: Vec<f64> = paths.iter().map(|p| p[t]).collect();
                out.regret_quantiles.push(RegretQuantileRow {
                    type_label: label.to_string(),
                    shock: shock.label(),
                    t: t + 1,
                    median: quantile(&column, 0.5),
                    q25: quantile(&column, 0.25),
                    q75: quantile(&column, 0.75),
                });
            }

            if s > 0 {
                let losses: Vec<f64> = rows.iter().filter_map(|(_, _, r)| r.welfare_loss).collect();
                if !losses.is_empty() {
                    out.shock_losses.push(loss_row(label, &shock.label(), &losses));
                }
            }
        }
    }
    Ok(out)
}
