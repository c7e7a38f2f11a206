use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, InvestorType};
use super::rng::{stream, tags};
use crate::error::{Error, Result};
use crate::forward::solve_forward;
use crate::inverse::InverseProblem;
use crate::model::{ShockSpec, UtilitySpec};
use crate::regret::{apply_shock, decision_regret, relative_welfare_loss_path, REGRET_SLACK};
use crate::stats::{bootstrap_ci, parametric_bootstrap_ci, ConfidenceInterval};
use crate::synthetic::{generate_observations, GeneratorConfig, InvestorSpec, SyntheticTrial};

/// Share of trials allowed to fail before a run aborts.
pub const FAILURE_BUDGET: f64 = 0.10;

pub const PARAMETERS: [&str; 3] = ["rho", "tau", "eta"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: u64,
    /// SHA-256 of the compact JSON config.
    pub config_hash: String,
    pub code_version: String,
    pub solver_note: String,
}

/// Outcome of one data-generating scenario within a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub shock: ShockSpec,
    pub estimate: [f64; 3],
    pub loss: f64,
    pub grid_evals: usize,
    pub local_variance: [f64; 3],
    /// Nonparametric intervals; baseline scenario only.
    pub np_intervals: Option<Vec<ConfidenceInterval>>,
    pub p_intervals: Vec<ConfidenceInterval>,
    /// Per-period regret over the test split.
    pub test_regret: Vec<f64>,
    /// Relative welfare loss of the true preferences under this shock;
    /// `None` for the baseline.
    pub welfare_loss: Option<f64>,
    /// Mean |ρ̂_t − ρ*| of the drift-penalized path on the training split.
    pub rho_path_mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub type_index: usize,
    pub truth: [f64; 3],
    /// Empty when the trial failed.
    pub scenarios: Vec<ScenarioRecord>,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub config: ExperimentConfig,
    pub provenance: Provenance,
    pub types: Vec<InvestorType>,
    pub trials: Vec<TrialRecord>,
}

impl RunArtifact {
    pub fn failed(&self) -> usize {
        self.trials.iter().filter(|t| !t.succeeded()).count()
    }

    pub fn type_label(&self, trial: &TrialRecord) -> &str {
        &self.types[trial.type_index].label
    }
}

pub fn provenance(config: &ExperimentConfig) -> Result<Provenance> {
    let json = serde_json::to_vec(config)?;
    let digest = Sha256::digest(&json);
    Ok(Provenance {
        master_seed: config.master_seed,
        config_hash: digest.iter().map(|b| format!("{b:02x}")).collect(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        solver_note: "active-set QP with budget tolerance 1e-8 and KKT tolerance 1e-6; commercial solver gap settings are not replicated".into(),
    })
}

/// Build a pool of `workers` threads (0 = rayon default) and run `f` in it.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub(crate) fn generator(config: &ExperimentConfig, ty: &InvestorType, shock: ShockSpec) -> GeneratorConfig {
    let m = &config.market;
    GeneratorConfig {
        n: config.n,
        k: config.k,
        periods: config.periods,
        sigma_f_sq: m.sigma_f_sq,
        var_lo: m.var_lo,
        var_hi: m.var_hi,
        mu_bar: m.mu_bar,
        sigma_mu_sq: m.sigma_mu_sq,
        garch: config.flags.garch,
        redraw_loadings: config.flags.redraw_loadings,
        noise: config.flags.noise,
        cost_power: None,
        shock,
        investor: InvestorSpec::Fixed {
            rho: ty.rho,
            tau: ty.tau,
            eta: ty.eta,
        },
    }
}

/// The trial's data under `shock`. Every scenario replays the same data
/// stream, so markets and ESG scores agree across scenarios.
pub(crate) fn scenario_data(config: &ExperimentConfig, ty: &InvestorType, trial: usize, shock: ShockSpec) -> Result<SyntheticTrial> {
    let mut rng = stream(config.master_seed, trial as u64, tags::DATA);
    generate_observations(&mut rng, &generator(config, ty, shock))
}

/// Relative welfare loss of the true preferences under each configured
/// shock, over all periods of the baseline data.
pub(crate) fn welfare_losses(config: &ExperimentConfig, ty: &InvestorType, baseline: &SyntheticTrial) -> Result<Vec<f64>> {
    let data = &baseline.data;
    let prefs: Vec<_> = (0..data.len()).map(|t| data.preferences(t, ty.rho, ty.tau, ty.eta)).collect();
    let markets = data.markets();
    config
        .shocks
        .iter()
        .map(|s| relative_welfare_loss_path(&prefs, &markets, s))
        .collect()
}

fn run_scenario(
    config: &ExperimentConfig,
    ty: &InvestorType,
    trial: usize,
    index: usize,
    shock: ShockSpec,
    sim: &SyntheticTrial,
    welfare_loss: Option<f64>,
) -> Result<ScenarioRecord> {
    let n_train = config.train_periods();
    let train = sim.data.slice(0..n_train);
    let problem = InverseProblem::new(&train);
    let est = problem.estimate(&config.grid, None, &vec![1.0; n_train])?;
    let boot = &config.bootstrap;
    let scenario_tag = tags::SCENARIO_STRIDE * index as u64;

    let np_intervals = if index == 0 && boot.b_nonparam > 0 {
        let mut rng = stream(config.master_seed, trial as u64, tags::BOOT_NP);
        Some(bootstrap_ci(&mut rng, n_train, boot.b_nonparam, boot.level, |w| {
            problem.estimate(&config.grid, None, w).map(|e| e.params().to_vec())
        })?)
    } else {
        None
    };
    let local_variance = est.local_variance();
    let mut rng = stream(config.master_seed, trial as u64, tags::BOOT_P + scenario_tag);
    let p_intervals = parametric_bootstrap_ci(&mut rng, &est.params(), &local_variance, boot.b_param, boot.level)?;

    let mut test_regret = Vec::with_capacity(config.periods - n_train);
    for t in n_train..config.periods {
        let obs = &sim.data.observations[t];
        let truth = sim.data.preferences(t, ty.rho, ty.tau, ty.eta);
        let (faced, truth) = apply_shock(&obs.market, &truth, &shock);
        let acting = est.estimate.with_x_prev(obs.x_prev.clone());
        let decision = solve_forward(&obs.market, &acting, &UtilitySpec::TurnoverEsg).map_err(|e| e.in_period(t))?;
        let r = decision_regret(&faced, &truth, &decision.portfolio).map_err(|e| e.in_period(t))?;
        if r < -REGRET_SLACK {
            return Err(Error::NonConvergence {
                iterations: 0,
                residual: -r,
            }
            .in_period(t));
        }
        test_regret.push(r.max(0.0));
    }

    let rho_path_mae = if config.flags.drift_gamma > 0.0 {
        let [_, tau, eta] = est.params();
        let path = problem.estimate_dynamic(&config.grid, config.flags.drift_gamma, Some((tau, eta)))?;
        let truth = &sim.rho_path[..n_train];
        Some(path.rho_path.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / n_train as f64)
    } else {
        None
    };

    Ok(ScenarioRecord {
        shock,
        estimate: est.params(),
        loss: est.loss,
        grid_evals: est.grid_evals,
        local_variance,
        np_intervals,
        p_intervals,
        test_regret,
        welfare_loss,
        rho_path_mae,
    })
}

fn run_trial(config: &ExperimentConfig, types: &[InvestorType], trial: usize) -> Result<Vec<ScenarioRecord>> {
    let ty = &types[trial % types.len()];
    let baseline = scenario_data(config, ty, trial, ShockSpec::IDENTITY)?;
    let losses = welfare_losses(config, ty, &baseline)?;
    let mut out = Vec::with_capacity(config.shocks.len() + 1);
    out.push(run_scenario(config, ty, trial, 0, ShockSpec::IDENTITY, &baseline, None)?);
    for (i, &shock) in config.shocks.iter().enumerate() {
        let sim = scenario_data(config, ty, trial, shock)?;
        out.push(run_scenario(config, ty, trial, i + 1, shock, &sim, Some(losses[i]))?);
    }
    Ok(out)
}

/// Run every trial in a pool of `workers` threads (0 = all cores). Failed
/// trials are recorded; the run aborts when more than 10% fail.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<RunArtifact> {
    config.check()?;
    let types = config.investor_types()?;
    let trials: Vec<TrialRecord> = with_workers(workers, || {
        (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let type_index = trial % types.len();
                let (scenarios, error) = match run_trial(config, &types, trial) {
                    Ok(s) => (s, None),
                    Err(e) => (Vec::new(), Some(e.in_trial(trial).to_string())),
                };
                TrialRecord {
                    trial,
                    type_index,
                    truth: types[type_index].params(),
                    scenarios,
                    error,
                }
            })
            .collect()
    })?;
    let failed = trials.iter().filter(|t| !t.succeeded()).count();
    if failed as f64 > FAILURE_BUDGET * config.trials as f64 {
        return Err(Error::FailureBudget {
            failed,
            total: config.trials,
        });
    }
    Ok(RunArtifact {
        provenance: provenance(config)?,
        config: config.clone(),
        types,
        trials,
    })
}
