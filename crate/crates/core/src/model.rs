//! Shared domain types: markets, preferences, portfolios and certificates.

use std::fmt;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Budget tolerance for `1ᵀx = 1`.
pub const BUDGET_TOL: f64 = 1e-8;
/// Nonnegativity tolerance for weights and multipliers.
pub const NONNEG_TOL: f64 = 1e-10;
/// Stationarity / complementary slackness tolerance for a certified optimum.
pub const KKT_TOL: f64 = 1e-6;
/// Symmetry tolerance on covariance matrices.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalue floor below which a covariance counts as singular.
pub const PD_TOL: f64 = 1e-10;
/// Upper bound on risk aversion (identifiability normalization).
pub const DEFAULT_RHO_MAX: f64 = 20.0;

/// One period's expected returns and return covariance.
#[derive(Clone, Serialize, Deserialize)]
pub struct MarketParams {
    pub mu: Vec<f64>,
    #[serde(with = "linalg::rows")]
    pub sigma: DMatrix<f64>,
    #[serde(skip)]
    spectrum: OnceLock<(f64, f64)>,
}

impl MarketParams {
    pub fn new(mu: Vec<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() != mu.len() || sigma.ncols() != mu.len() {
            return Err(Error::Dimension(format!(
                "mu has {} entries but sigma is {}x{}",
                mu.len(),
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        Ok(Self {
            mu,
            sigma,
            spectrum: OnceLock::new(),
        })
    }

    pub fn n_assets(&self) -> usize {
        self.mu.len()
    }

    /// (min, max) eigenvalue of `sigma`, computed once.
    pub fn eigen_bounds(&self) -> (f64, f64) {
        *self.spectrum.get_or_init(|| linalg::eigen_bounds(&self.sigma))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen_bounds().0
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigen_bounds().1
    }

    pub fn with_sigma_scaled(&self, factor: f64) -> Self {
        Self::new(self.mu.clone(), &self.sigma * factor).expect("dimensions unchanged")
    }
}

impl fmt::Debug for MarketParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MarketParams")
            .field("mu", &self.mu)
            .field("sigma", &self.sigma)
            .finish()
    }
}

impl PartialEq for MarketParams {
    fn eq(&self, other: &Self) -> bool {
        self.mu == other.mu && self.sigma == other.sigma
    }
}

/// Weight vector on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub weights: Vec<f64>,
}

impl Portfolio {
    pub fn new(weights: Vec<f64>) -> Self {
        Self { weights }
    }

    pub fn equal(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn vertex(n: usize, i: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[i] = 1.0;
        Self { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Indices with weight above `1e-8`.
    pub fn active_set(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 1e-8)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn distance_sq(&self, other: &Portfolio) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Latent investor preferences.
///
/// `rho` multiplies the variance term, `tau` charges L1 turnover away from
/// `x_prev`, and the linear cost actually applied is
/// `linear_cost + eta * esg_scores`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preferences {
    pub rho: f64,
    pub tau: f64,
    pub eta: f64,
    pub esg_scores: Vec<f64>,
    pub linear_cost: Vec<f64>,
    pub x_prev: Portfolio,
}

impl Preferences {
    /// Pure mean-variance preferences on `n` assets, starting from equal weights.
    pub fn mean_variance(n: usize, rho: f64) -> Self {
        Self {
            rho,
            tau: 0.0,
            eta: 0.0,
            esg_scores: vec![0.0; n],
            linear_cost: vec![0.0; n],
            x_prev: Portfolio::equal(n),
        }
    }

    pub fn n_assets(&self) -> usize {
        self.esg_scores.len()
    }

    pub fn effective_cost(&self) -> Vec<f64> {
        self.linear_cost
            .iter()
            .zip(&self.esg_scores)
            .map(|(c, s)| c + self.eta * s)
            .collect()
    }

    /// Same known vectors, different scalar parameters.
    pub fn with_params(&self, rho: f64, tau: f64, eta: f64) -> Self {
        Self {
            rho,
            tau,
            eta,
            ..self.clone()
        }
    }

    pub fn with_x_prev(&self, x_prev: Portfolio) -> Self {
        Self {
            x_prev,
            ..self.clone()
        }
    }

    pub fn params(&self) -> [f64; 3] {
        [self.rho, self.tau, self.eta]
    }
}

/// Multipliers and residuals witnessing (approximate) optimality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KKTCertificate {
    pub lambda: f64,
    pub nu: Vec<f64>,
    pub stationarity_residual: f64,
    pub vi_gap: f64,
    /// max_i |nu_i * x_i|
    pub complementarity: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl KKTCertificate {
    pub fn is_certified(&self) -> bool {
        self.stationarity_residual <= KKT_TOL
            && self.vi_gap >= -KKT_TOL
            && self.complementarity <= KKT_TOL
            && self.nu.iter().all(|&v| v >= -NONNEG_TOL)
    }
}

/// Which forward objective an investor maximizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum UtilitySpec {
    /// μᵀx − (ρ/2)xᵀΣx − cᵀx
    LinearCost,
    /// LinearCost − τ‖x − x_prev‖₁
    TurnoverEsg,
    /// μᵀx − (ρ/2)xᵀΣx − Σ κ_j x_j^p
    NonlinearPower { kappa: Vec<f64>, p: f64 },
    /// Worst case over a ball of radius δ_μ around μ and δ_Σ around Σ.
    Robust { delta_mu: f64, delta_sigma: f64 },
}

impl UtilitySpec {
    pub fn check(&self) -> Result<()> {
        match self {
            UtilitySpec::NonlinearPower { kappa, p } => {
                if !(*p >= 1.0) {
                    return Err(Error::InvalidRange(format!("power p = {p} must be >= 1")));
                }
                if kappa.iter().any(|&k| !(k >= 0.0)) {
                    return Err(Error::InvalidRange("kappa must be nonnegative".into()));
                }
                Ok(())
            }
            UtilitySpec::Robust {
                delta_mu,
                delta_sigma,
            } => {
                if !(*delta_mu >= 0.0 && *delta_sigma >= 0.0) {
                    return Err(Error::InvalidRange(
                        "robustness radii must be nonnegative".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Cost inflation δ and covariance inflation γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockSpec {
    pub delta_cost: f64,
    pub gamma_vol: f64,
}

impl ShockSpec {
    pub const IDENTITY: ShockSpec = ShockSpec {
        delta_cost: 0.0,
        gamma_vol: 0.0,
    };

    pub fn cost(delta: f64) -> Self {
        Self {
            delta_cost: delta,
            gamma_vol: 0.0,
        }
    }

    pub fn volatility(gamma: f64) -> Self {
        Self {
            delta_cost: 0.0,
            gamma_vol: gamma,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.delta_cost >= 0.0 && self.gamma_vol >= 0.0
    }

    /// Short label used in output tables.
    pub fn label(&self) -> String {
        match (self.delta_cost > 0.0, self.gamma_vol > 0.0) {
            (false, false) => "baseline".to_string(),
            (true, false) => format!("cost+{}", self.delta_cost),
            (false, true) => format!("vol+{}", self.gamma_vol),
            (true, true) => format!("cost+{}_vol+{}", self.delta_cost, self.gamma_vol),
        }
    }
}

/// A violated type invariant, as reported by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DimensionMismatch(String),
    SigmaAsymmetric(f64),
    NotPsd(f64),
    BudgetViolated(f64),
    NegativeWeight { index: usize, weight: f64 },
    RhoOutOfRange(f64),
    NegativeParameter(&'static str),
    NegativeVectorEntry(&'static str),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimensionMismatch(what) => write!(f, "dimension mismatch: {what}"),
            Violation::SigmaAsymmetric(_) => f.write_str("sigma not symmetric"),
            Violation::NotPsd(_) => f.write_str("not PSD"),
            Violation::BudgetViolated(_) => f.write_str("budget violated"),
            Violation::NegativeWeight { .. } => f.write_str("negative weight"),
            Violation::RhoOutOfRange(_) => f.write_str("rho out of range"),
            Violation::NegativeParameter(name) => write!(f, "{name} negative"),
            Violation::NegativeVectorEntry(name) => write!(f, "{name} has negative entries"),
        }
    }
}

pub fn validate_market(market: &MarketParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = market.mu.len();
    if market.sigma.nrows() != n || market.sigma.ncols() != n {
        out.push(Violation::DimensionMismatch(format!(
            "mu {} vs sigma {}x{}",
            n,
            market.sigma.nrows(),
            market.sigma.ncols()
        )));
        return out;
    }
    let asym = linalg::max_asymmetry(&market.sigma);
    if asym > SYMMETRY_TOL {
        out.push(Violation::SigmaAsymmetric(asym));
    }
    let min_eig = market.min_eigenvalue();
    if min_eig < -PD_TOL {
        out.push(Violation::NotPsd(min_eig));
    }
    out
}

pub fn validate_portfolio(portfolio: &Portfolio) -> Vec<Violation> {
    let mut out = Vec::new();
    let sum: f64 = portfolio.weights.iter().sum();
    if (sum - 1.0).abs() > BUDGET_TOL {
        out.push(Violation::BudgetViolated(sum));
    }
    if let Some((index, &weight)) = portfolio
        .weights
        .iter()
        .enumerate()
        .find(|(_, &w)| w < -NONNEG_TOL)
    {
        out.push(Violation::NegativeWeight { index, weight });
    }
    out
}

pub fn validate_preferences(prefs: &Preferences) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(0.0..=DEFAULT_RHO_MAX).contains(&prefs.rho) {
        out.push(Violation::RhoOutOfRange(prefs.rho));
    }
    if !(prefs.tau >= 0.0) {
        out.push(Violation::NegativeParameter("tau"));
    }
    if !(prefs.eta >= 0.0) {
        out.push(Violation::NegativeParameter("eta"));
    }
    if prefs.esg_scores.iter().any(|&v| !(v >= 0.0)) {
        out.push(Violation::NegativeVectorEntry("esg_scores"));
    }
    if prefs.linear_cost.iter().any(|&v| !(v >= 0.0)) {
        out.push(Violation::NegativeVectorEntry("linear_cost"));
    }
    if prefs.linear_cost.len() != prefs.esg_scores.len()
        || prefs.x_prev.len() != prefs.esg_scores.len()
    {
        out.push(Violation::DimensionMismatch(
            "preference vectors differ in length".into(),
        ));
    }
    out.extend(validate_portfolio(&prefs.x_prev));
    out
}

/// Every violated invariant across the three inputs; empty when all hold.
pub fn validate(market: &MarketParams, prefs: &Preferences, portfolio: &Portfolio) -> Vec<Violation> {
    let mut out = validate_market(market);
    out.extend(validate_preferences(prefs));
    out.extend(validate_portfolio(portfolio));
    let n = market.mu.len();
    if prefs.n_assets() != n || portfolio.len() != n {
        out.push(Violation::DimensionMismatch(format!(
            "market has {n} assets, preferences {}, portfolio {}",
            prefs.n_assets(),
            portfolio.len()
        )));
    }
    out
}
