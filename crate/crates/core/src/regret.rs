//! Dynamic regret, utility gaps and shocked-environment welfare.
//!
//! Regret is measured under the true preferences: the shortfall of the
//! portfolio chosen with estimated preferences against the true optimum.
//! All objectives are the linear turnover/ESG utility.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{solve_forward, utility};
use crate::model::{MarketParams, Portfolio, Preferences, ShockSpec, UtilitySpec};

/// Slack allowed below zero before a negative regret is treated as an error.
pub const REGRET_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSeries {
    pub per_period: Vec<f64>,
    /// Running sums of `per_period`.
    pub cumulative: Vec<f64>,
    /// `R_T / √T`.
    pub normalized_final: f64,
    pub static_component: f64,
    pub drift_component: f64,
    /// Per-period share of regret attributed to preference drift.
    pub drift_per_period: Vec<f64>,
}

impl RegretSeries {
    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

fn optimum(market: &MarketParams, prefs: &Preferences) -> Result<(Portfolio, f64)> {
    let sol = solve_forward(market, prefs, &UtilitySpec::TurnoverEsg)?;
    Ok((sol.portfolio, sol.objective))
}

/// Utility under `truth` of the portfolio chosen by `acting`, both starting
/// from `truth.x_prev`.
fn value_of_acting(market: &MarketParams, truth: &Preferences, acting: &Preferences) -> Result<f64> {
    let acting = acting.with_x_prev(truth.x_prev.clone());
    let (x, _) = optimum(market, &acting)?;
    Ok(utility(market, truth, &UtilitySpec::TurnoverEsg, &x))
}

/// Per-period regret of acting on `est_path` when `true_path` holds, with
/// a drift/static split. Both decisions in period t start from
/// `true_path[t].x_prev`.
pub fn dynamic_regret(true_path: &[Preferences], est_path: &[Preferences], markets: &[MarketParams]) -> Result<RegretSeries> {
    let t_len = markets.len();
    if t_len == 0 {
        return Err(Error::EmptyInput("markets"));
    }
    if true_path.len() != t_len || est_path.len() != t_len {
        return Err(Error::LengthMismatch(format!(
            "{} true preferences, {} estimates, {} markets",
            true_path.len(),
            est_path.len(),
            t_len
        )));
    }
    let mut per_period = Vec::with_capacity(t_len);
    let mut drift_per_period = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let (m, truth) = (&markets[t], &true_path[t]);
        let (_, best) = optimum(m, truth).map_err(|e| e.in_period(t))?;
        let regret = if est_path[t].params() == truth.params() {
            0.0
        } else {
            best - value_of_acting(m, truth, &est_path[t]).map_err(|e| e.in_period(t))?
        };
        if regret < -REGRET_SLACK {
            return Err(Error::NonConvergence {
                iterations: 0,
                residual: -regret,
            });
        }
        let regret = regret.max(0.0);
        let drift = if t > 0 && true_path[t - 1].params() != truth.params() {
            let stale = best - value_of_acting(m, truth, &true_path[t - 1]).map_err(|e| e.in_period(t))?;
            stale.clamp(0.0, regret)
        } else {
            0.0
        };
        per_period.push(regret);
        drift_per_period.push(drift);
    }
    let mut cumulative = Vec::with_capacity(t_len);
    let mut run = 0.0;
    for r in &per_period {
        run += r;
        cumulative.push(run);
    }
    let drift_component: f64 = drift_per_period.iter().sum();
    Ok(RegretSeries {
        normalized_final: run / (t_len as f64).sqrt(),
        static_component: run - drift_component,
        drift_component,
        per_period,
        cumulative,
        drift_per_period,
    })
}

/// Optimal utility under `truth` minus the utility of `decision`.
pub fn decision_regret(market: &MarketParams, truth: &Preferences, decision: &Portfolio) -> Result<f64> {
    let (_, best) = optimum(market, truth)?;
    Ok(best - utility(market, truth, &UtilitySpec::TurnoverEsg, decision))
}

/// Mean regret over `markets` of acting on `est` when `truth` holds.
pub fn utility_gap(truth: &Preferences, est: &Preferences, markets: &[MarketParams]) -> Result<f64> {
    let path = vec![truth.clone(); markets.len()];
    let est_path = vec![est.clone(); markets.len()];
    let series = dynamic_regret(&path, &est_path, markets)?;
    Ok(series.total() / markets.len() as f64)
}

/// Scale the cost channel (τ, linear cost, η) by `1+δ` and Σ by `1+γ`.
pub fn apply_shock(market: &MarketParams, prefs: &Preferences, shock: &ShockSpec) -> (MarketParams, Preferences) {
    let cost = 1.0 + shock.delta_cost;
    let market = if shock.gamma_vol == 0.0 {
        market.clone()
    } else {
        market.with_sigma_scaled(1.0 + shock.gamma_vol)
    };
    let prefs = if shock.delta_cost == 0.0 {
        prefs.clone()
    } else {
        Preferences {
            tau: prefs.tau * cost,
            eta: prefs.eta * cost,
            linear_cost: prefs.linear_cost.iter().map(|c| c * cost).collect(),
            ..prefs.clone()
        }
    };
    (market, prefs)
}

/// Mean optimal utility at baseline and under `shock`, re-optimized in each.
pub fn environment_utilities(prefs_path: &[Preferences], markets: &[MarketParams], shock: &ShockSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    if markets.is_empty() {
        return Err(Error::EmptyInput("markets"));
    }
    if prefs_path.len() != markets.len() {
        return Err(Error::LengthMismatch("preferences and markets".into()));
    }
    let mut base = Vec::with_capacity(markets.len());
    let mut shocked = Vec::with_capacity(markets.len());
    for (t, (m, p)) in markets.iter().zip(prefs_path).enumerate() {
        base.push(optimum(m, p).map_err(|e| e.in_period(t))?.1);
        let (sm, sp) = apply_shock(m, p, shock);
        shocked.push(optimum(&sm, &sp).map_err(|e| e.in_period(t))?.1);
    }
    Ok((base, shocked))
}

/// `(mean f* − mean f*') / mean |f*|` with one preference set per market.
pub fn relative_welfare_loss_path(prefs_path: &[Preferences], markets: &[MarketParams], shock: &ShockSpec) -> Result<f64> {
    let (base, shocked) = environment_utilities(prefs_path, markets, shock)?;
    let n = base.len() as f64;
    let denom = base.iter().map(|v| v.abs()).sum::<f64>() / n;
    if denom <= 1e-12 {
        return Err(Error::DegenerateBaseline(denom));
    }
    let num = base.iter().sum::<f64>() / n - shocked.iter().sum::<f64>() / n;
    Ok(num / denom)
}

pub fn relative_welfare_loss(prefs: &Preferences, markets: &[MarketParams], shock: &ShockSpec) -> Result<f64> {
    relative_welfare_loss_path(&vec![prefs.clone(); markets.len()], markets, shock)
}
