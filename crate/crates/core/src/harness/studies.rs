//! Focused simulation studies: growth of recovery accuracy with T, error
//! under a nonlinear cost the estimator does not model, online regret, and
//! welfare losses under shocks.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, InvestorType};
use super::rng::{stream, tags};
use super::run::{scenario_data, welfare_losses, with_workers};
use super::summary::{loss_row, ShockLossRow, ALL_TYPES};
use crate::error::{Error, Result};
use crate::inverse::{InverseProblem, ParamGrid};
use crate::model::{Preferences, ShockSpec};
use crate::regret::{dynamic_regret, RegretSeries};
use crate::stats::{convergence_slope, median, summarize_estimates};
use crate::synthetic::{generate_observations, GeneratorConfig, InvestorSpec, ObservationSet};

fn data_for(master_seed: u64, seed: usize, gen: &GeneratorConfig) -> Result<ObservationSet> {
    let mut rng = stream(master_seed, seed as u64, tags::DATA);
    Ok(generate_observations(&mut rng, gen)?.data)
}

fn fixed(n: usize, k: usize, periods: usize, p: [f64; 3]) -> GeneratorConfig {
    GeneratorConfig {
        n,
        k,
        periods,
        investor: InvestorSpec::Fixed {
            rho: p[0],
            tau: p[1],
            eta: p[2],
        },
        ..GeneratorConfig::default()
    }
}

fn all_ones_prefix(len: usize, upto: usize) -> Vec<f64> {
    (0..len).map(|t| if t < upto { 1.0 } else { 0.0 }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsistencyStudy {
    pub sizes: Vec<usize>,
    pub seeds: usize,
    pub master_seed: u64,
    pub n: usize,
    pub k: usize,
    pub grid: ParamGrid,
    /// Truths are drawn uniformly from this (ρ, τ, η) box.
    pub truth_box: [(f64, f64); 3],
}

impl Default for ConsistencyStudy {
    fn default() -> Self {
        Self {
            sizes: vec![25, 50, 100, 200],
            seeds: 20,
            master_seed: 11,
            n: 10,
            k: 3,
            grid: ParamGrid::default(),
            truth_box: [(1.5, 9.5), (0.05, 0.45), (0.25, 1.75)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub sizes: Vec<usize>,
    pub truths: Vec<[f64; 3]>,
    /// `estimates[i][s]`: seed `s` on the first `sizes[i]` periods.
    pub estimates: Vec<Vec<[f64; 3]>>,
    /// Per size, median |θ̂ − θ*| per parameter.
    pub median_abs_error: Vec<[f64; 3]>,
    pub mse: Vec<[f64; 3]>,
    /// Log-log MSE slope per parameter; `None` where some MSE is zero.
    pub slopes: [Option<f64>; 3],
}

impl ConsistencyStudy {
    /// Each seed draws one off-grid truth and one dataset; every size
    /// estimates on a prefix of that dataset.
    pub fn run(&self, workers: usize) -> Result<ConsistencyReport> {
        let max_t = *self.sizes.iter().max().ok_or(Error::EmptyInput("sizes"))?;
        let per_seed: Vec<([f64; 3], Vec<[f64; 3]>)> = with_workers(workers, || {
            (0..self.seeds)
                .into_par_iter()
                .map(|s| -> Result<([f64; 3], Vec<[f64; 3]>)> {
                    let mut rng = stream(self.master_seed, s as u64, tags::STUDY);
                    let truth = self.truth_box.map(|(lo, hi)| rng.random_range(lo..=hi));
                    let data = data_for(self.master_seed, s, &fixed(self.n, self.k, max_t, truth))?;
                    let problem = InverseProblem::new(&data);
                    let est = self
                        .sizes
                        .iter()
                        .map(|&t| Ok(problem.estimate(&self.grid, None, &all_ones_prefix(max_t, t))?.params()))
                        .collect::<Result<Vec<_>>>()?;
                    Ok((truth, est))
                })
                .collect::<Result<Vec<_>>>()
        })??;
        let truths: Vec<[f64; 3]> = per_seed.iter().map(|(t, _)| *t).collect();
        let estimates: Vec<Vec<[f64; 3]>> = (0..self.sizes.len())
            .map(|i| per_seed.iter().map(|(_, e)| e[i]).collect())
            .collect();
        let mut median_abs_error = Vec::new();
        let mut mse = Vec::new();
        for est in &estimates {
            let mut med = [0.0; 3];
            let mut m = [0.0; 3];
            for a in 0..3 {
                let err: Vec<f64> = est.iter().zip(&truths).map(|(e, t)| e[a] - t[a]).collect();
                med[a] = median(&err.iter().map(|e| e.abs()).collect::<Vec<_>>());
                m[a] = summarize_estimates(&err, 0.0)?.mse;
            }
            median_abs_error.push(med);
            mse.push(m);
        }
        let slopes = [0, 1, 2].map(|a| {
            let pts: Vec<(f64, f64)> = self.sizes.iter().zip(&mse).map(|(&t, m)| (t as f64, m[a])).collect();
            convergence_slope(&pts).ok()
        });
        Ok(ConsistencyReport {
            sizes: self.sizes.clone(),
            truths,
            estimates,
            median_abs_error,
            mse,
            slopes,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustnessStudy {
    pub powers: Vec<f64>,
    pub seeds: usize,
    pub master_seed: u64,
    pub n: usize,
    pub k: usize,
    pub periods: usize,
    pub grid: ParamGrid,
}

impl Default for RobustnessStudy {
    fn default() -> Self {
        Self {
            powers: vec![1.1, 1.3, 1.5],
            seeds: 20,
            master_seed: 13,
            n: 10,
            k: 3,
            periods: 100,
            grid: ParamGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub powers: Vec<f64>,
    pub truths: Vec<[f64; 3]>,
    /// `errors[i][s]`: Euclidean (ρ, τ, η) error of seed `s` at `powers[i]`.
    pub errors: Vec<Vec<f64>>,
    pub median_error: Vec<f64>,
}

impl RobustnessStudy {
    /// Data come from Σ κ_j x_j^p costs with κ = η·esg and no turnover
    /// charge; estimation assumes the linear cost. Each seed shares its
    /// markets across powers.
    pub fn run(&self, workers: usize) -> Result<RobustnessReport> {
        let rhos = &self.grid.rho_values;
        let etas: Vec<f64> = self.grid.eta_values.iter().copied().filter(|&e| e > 0.0).collect();
        if etas.is_empty() {
            return Err(Error::InvalidConfig("robustness study needs a positive eta grid value".into()));
        }
        let per_seed: Vec<([f64; 3], Vec<f64>)> = with_workers(workers, || {
            (0..self.seeds)
                .into_par_iter()
                .map(|s| -> Result<([f64; 3], Vec<f64>)> {
                    let mut rng = stream(self.master_seed, s as u64, tags::STUDY);
                    let truth = [rhos[rng.random_range(0..rhos.len())], 0.0, etas[rng.random_range(0..etas.len())]];
                    let errs = self
                        .powers
                        .iter()
                        .map(|&p| {
                            let gen = GeneratorConfig {
                                cost_power: Some(p),
                                ..fixed(self.n, self.k, self.periods, truth)
                            };
                            let data = data_for(self.master_seed, s, &gen)?;
                            let est = InverseProblem::new(&data).estimate(&self.grid, None, &vec![1.0; data.len()])?;
                            let e = est.params();
                            Ok((0..3).map(|a| (e[a] - truth[a]).powi(2)).sum::<f64>().sqrt())
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    Ok((truth, errs))
                })
                .collect::<Result<Vec<_>>>()
        })??;
        let errors: Vec<Vec<f64>> = (0..self.powers.len())
            .map(|i| per_seed.iter().map(|(_, e)| e[i]).collect())
            .collect();
        Ok(RobustnessReport {
            powers: self.powers.clone(),
            truths: per_seed.iter().map(|(t, _)| *t).collect(),
            median_error: errors.iter().map(|e| median(e)).collect(),
            errors,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegretStudy {
    pub sizes: Vec<usize>,
    pub seeds: usize,
    pub master_seed: u64,
    pub n: usize,
    pub k: usize,
    pub grid: ParamGrid,
    /// Static truths; seed `s` uses entry `s mod len`. Empty uses the
    /// default experiment types.
    pub types: Vec<InvestorType>,
}

impl Default for RegretStudy {
    fn default() -> Self {
        Self {
            sizes: vec![100, 400],
            seeds: 20,
            master_seed: 17,
            n: 10,
            k: 3,
            grid: ParamGrid::default(),
            types: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSeedResult {
    pub truth: [f64; 3],
    /// One series per size, over that size's prefix.
    pub series: Vec<RegretSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub sizes: Vec<usize>,
    pub seeds: Vec<RegretSeedResult>,
    /// Per size, median of `R_T/√T` over seeds.
    pub median_normalized: Vec<f64>,
    /// Largest |static + drift − R_T| over seeds and sizes.
    pub max_decomposition_residual: f64,
}

impl RegretStudy {
    /// Online estimation: the decision in period t uses θ̂ fitted on
    /// periods before t (the lexicographically smallest grid point when
    /// there are none).
    pub fn run(&self, workers: usize) -> Result<RegretReport> {
        let max_t = *self.sizes.iter().max().ok_or(Error::EmptyInput("sizes"))?;
        let types = if self.types.is_empty() {
            ExperimentConfig {
                master_seed: self.master_seed,
                grid: self.grid.clone(),
                ..ExperimentConfig::default()
            }
            .investor_types()?
        } else {
            self.types.clone()
        };
        let seeds: Vec<RegretSeedResult> = with_workers(workers, || {
            (0..self.seeds)
                .into_par_iter()
                .map(|s| -> Result<RegretSeedResult> {
                    let truth = types[s % types.len()].params();
                    let data = data_for(self.master_seed, s, &fixed(self.n, self.k, max_t, truth))?;
                    let problem = InverseProblem::new(&data);
                    let mut est_path: Vec<Preferences> = Vec::with_capacity(max_t);
                    for t in 0..max_t {
                        let [r, ta, e] = problem.estimate(&self.grid, None, &all_ones_prefix(max_t, t))?.params();
                        est_path.push(data.preferences(t, r, ta, e));
                    }
                    let true_path: Vec<Preferences> =
                        (0..max_t).map(|t| data.preferences(t, truth[0], truth[1], truth[2])).collect();
                    let markets = data.markets();
                    let series = self
                        .sizes
                        .iter()
                        .map(|&t| dynamic_regret(&true_path[..t], &est_path[..t], &markets[..t]))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(RegretSeedResult { truth, series })
                })
                .collect::<Result<Vec<_>>>()
        })??;
        let median_normalized = (0..self.sizes.len())
            .map(|i| median(&seeds.iter().map(|r| r.series[i].normalized_final).collect::<Vec<_>>()))
            .collect();
        let max_decomposition_residual = seeds
            .iter()
            .flat_map(|r| r.series.iter())
            .map(|s| (s.static_component + s.drift_component - s.total()).abs())
            .fold(0.0, f64::max);
        Ok(RegretReport {
            sizes: self.sizes.clone(),
            seeds,
            median_normalized,
            max_decomposition_residual,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockStudy {
    pub shocks: Vec<ShockSpec>,
    /// Per trial: type index and one loss per shock.
    pub trials: Vec<(usize, Vec<f64>)>,
    pub rows: Vec<ShockLossRow>,
}

impl ShockStudy {
    /// Pooled mean loss under `shock`.
    pub fn population_mean(&self, shock: &ShockSpec) -> Option<f64> {
        let label = shock.label();
        self.rows
            .iter()
            .find(|r| r.type_label == ALL_TYPES && r.shock == label)
            .map(|r| r.mean)
    }
}

/// Relative welfare losses of the true preferences for every trial of
/// `config`, using the same baseline data as [`super::run_experiment`].
pub fn shock_study(config: &ExperimentConfig, workers: usize) -> Result<ShockStudy> {
    config.check()?;
    let types = config.investor_types()?;
    let trials: Vec<(usize, Vec<f64>)> = with_workers(workers, || {
        (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let ti = trial % types.len();
                let base = scenario_data(config, &types[ti], trial, ShockSpec::IDENTITY).map_err(|e| e.in_trial(trial))?;
                Ok((ti, welfare_losses(config, &types[ti], &base).map_err(|e| e.in_trial(trial))?))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut rows = Vec::new();
    let scopes = std::iter::once(None).chain((0..types.len()).map(Some));
    for scope in scopes {
        let label = scope.map_or(ALL_TYPES, |i| types[i].label.as_str());
        for (j, shock) in config.shocks.iter().enumerate() {
            let losses: Vec<f64> = trials
                .iter()
                .filter(|(ti, _)| scope.is_none_or(|i| i == *ti))
                .map(|(_, l)| l[j])
                .collect();
            if !losses.is_empty() {
                rows.push(loss_row(label, &shock.label(), &losses));
            }
        }
    }
    Ok(ShockStudy {
        shocks: config.shocks.clone(),
        trials,
        rows,
    })
}
