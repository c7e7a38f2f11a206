//! Forward portfolio problem on the simplex.
//!
//! `LinearCost` and `TurnoverEsg` are convex QPs solved exactly by an
//! active-set method; the nonlinear-cost and robust variants are smooth and
//! solved by projected gradient plus a Newton polish. Every returned
//! solution carries a KKT certificate that has been checked against
//! [`KKT_TOL`].

mod active_set;
mod certificate;
mod gradient;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, mat_vec, norm2, quad_form};
use crate::model::{KKTCertificate, MarketParams, Portfolio, Preferences, UtilitySpec, KKT_TOL, PD_TOL};

pub use gradient::project_simplex;

use active_set::TurnoverQp;
use gradient::{NonlinearCost, RobustObjective, SmoothObjective};

/// Ridge added to a covariance whose smallest eigenvalue is below `PD_TOL`.
pub const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardSolution {
    pub portfolio: Portfolio,
    pub objective: f64,
    pub certificate: KKTCertificate,
    pub iterations: usize,
    pub active_set: Vec<usize>,
}

/// Maximize the selected objective over the simplex.
pub fn solve_forward(market: &MarketParams, prefs: &Preferences, spec: &UtilitySpec) -> Result<ForwardSolution> {
    solve_forward_impl(market, prefs, spec, None)
}

/// As [`solve_forward`], warm-started from a feasible portfolio. The QP
/// variants reuse the start's active set; the gradient variants start there.
pub fn solve_forward_warm(
    market: &MarketParams,
    prefs: &Preferences,
    spec: &UtilitySpec,
    start: &Portfolio,
) -> Result<ForwardSolution> {
    solve_forward_impl(market, prefs, spec, Some(&start.weights))
}

fn solve_forward_impl(
    market: &MarketParams,
    prefs: &Preferences,
    spec: &UtilitySpec,
    start: Option<&[f64]>,
) -> Result<ForwardSolution> {
    spec.check()?;
    check_dims(market, prefs)?;
    match spec {
        UtilitySpec::LinearCost => solve_qp(market, prefs, 0.0, spec, start),
        UtilitySpec::TurnoverEsg => solve_qp(market, prefs, prefs.tau, spec, start),
        UtilitySpec::NonlinearPower { kappa, p } => {
            let obj = NonlinearCost {
                market,
                rho: prefs.rho,
                kappa,
                p: *p,
            };
            solve_smooth(&obj, market.n_assets(), start, |x| {
                nonlinear_objective(market, prefs.rho, kappa, *p, x)
            })
        }
        UtilitySpec::Robust {
            delta_mu,
            delta_sigma,
        } => {
            let cost = prefs.effective_cost();
            let obj = RobustObjective {
                market,
                rho: prefs.rho,
                cost: &cost,
                delta_mu: *delta_mu,
                delta_sigma: *delta_sigma,
            };
            solve_smooth(&obj, market.n_assets(), start, |x| {
                robust_objective(market, prefs.rho, &cost, *delta_mu, *delta_sigma, x)
            })
        }
    }
}

fn check_dims(market: &MarketParams, prefs: &Preferences) -> Result<()> {
    let n = market.n_assets();
    if n == 0 {
        return Err(Error::EmptyInput("market with no assets"));
    }
    if prefs.n_assets() != n || prefs.linear_cost.len() != n || prefs.x_prev.len() != n {
        return Err(Error::Dimension(format!(
            "market has {n} assets but preferences have {}",
            prefs.n_assets()
        )));
    }
    Ok(())
}

/// `rho * sigma`, ridged when sigma is numerically singular.
fn curvature(market: &MarketParams, rho: f64) -> (DMatrix<f64>, Option<String>) {
    let min_eig = market.min_eigenvalue();
    if min_eig < PD_TOL {
        let n = market.n_assets();
        let q = (&market.sigma + DMatrix::identity(n, n) * RIDGE) * rho;
        let warning = format!("covariance min eigenvalue {min_eig:.3e} < {PD_TOL:e}; added ridge {RIDGE:e}");
        (q, Some(warning))
    } else {
        (&market.sigma * rho, None)
    }
}

fn solve_qp(
    market: &MarketParams,
    prefs: &Preferences,
    tau: f64,
    spec: &UtilitySpec,
    start: Option<&[f64]>,
) -> Result<ForwardSolution> {
    let cost = prefs.effective_cost();
    let reward: Vec<f64> = market.mu.iter().zip(&cost).map(|(m, c)| m - c).collect();
    let prev = &prefs.x_prev.weights;

    let (weights, iterations, warning) = if prefs.rho == 0.0 {
        (active_set::solve_linear(&reward, tau, prev), 1, None)
    } else {
        let (q, warning) = curvature(market, prefs.rho);
        let qp = TurnoverQp {
            q: &q,
            reward: &reward,
            tau,
            prev,
        };
        let (x, it) = qp.solve(start)?;
        (x, it, warning)
    };

    let portfolio = Portfolio::new(weights);
    let mut cert = kkt_certificate(market, prefs, spec, &portfolio);
    cert.warnings.extend(warning);
    finish(market, prefs, spec, portfolio, cert, iterations)
}

fn solve_smooth<O: SmoothObjective>(
    obj: &O,
    n: usize,
    start: Option<&[f64]>,
    objective: impl Fn(&[f64]) -> f64,
) -> Result<ForwardSolution> {
    let equal = vec![1.0 / n as f64; n];
    let zeros = vec![0.0; n];
    let cert_of = |x: &[f64]| certificate::certificate(x, &obj.gradient(x), 0.0, &zeros);
    let polished = |x: Vec<f64>| {
        let cert = cert_of(&x);
        match obj.polish(&x) {
            Some(p) => {
                let pc = cert_of(&p);
                if pc.stationarity_residual <= cert.stationarity_residual && pc.vi_gap >= cert.vi_gap.min(-KKT_TOL) {
                    (p, pc)
                } else {
                    (x, cert)
                }
            }
            None => (x, cert),
        }
    };

    // A short run is often enough for the polish to certify.
    let mut run = gradient::projected_gradient(obj, start.unwrap_or(&equal), gradient::WARM_ITER);
    let (mut x, mut cert) = polished(run.x.clone());
    if !run.converged && !cert.is_certified() {
        let rest = gradient::projected_gradient(obj, &run.x, gradient::MAX_ITER - gradient::WARM_ITER);
        run = gradient::GradientRun {
            iterations: run.iterations + rest.iterations,
            ..rest
        };
        (x, cert) = polished(run.x.clone());
    }
    if !run.converged && cert.stationarity_residual > KKT_TOL {
        return Err(Error::NonConvergence {
            iterations: run.iterations,
            residual: cert.stationarity_residual,
        });
    }
    let objective = objective(&x);
    let portfolio = Portfolio::new(x);
    check_certificate(&cert, run.iterations)?;
    Ok(ForwardSolution {
        active_set: portfolio.active_set(),
        portfolio,
        objective,
        certificate: cert,
        iterations: run.iterations,
    })
}

fn finish(
    market: &MarketParams,
    prefs: &Preferences,
    spec: &UtilitySpec,
    portfolio: Portfolio,
    certificate: KKTCertificate,
    iterations: usize,
) -> Result<ForwardSolution> {
    check_certificate(&certificate, iterations)?;
    Ok(ForwardSolution {
        objective: utility(market, prefs, spec, &portfolio),
        active_set: portfolio.active_set(),
        portfolio,
        certificate,
        iterations,
    })
}

fn check_certificate(cert: &KKTCertificate, iterations: usize) -> Result<()> {
    if cert.stationarity_residual > KKT_TOL || cert.vi_gap < -KKT_TOL {
        return Err(Error::NonConvergence {
            iterations,
            residual: cert.stationarity_residual,
        });
    }
    Ok(())
}

/// Closed-form optimum `x = Σ⁻¹(μ − c − λ𝟏)/ρ` with λ fixing the budget.
pub fn interior_solution(market: &MarketParams, rho: f64, effective_cost: &[f64]) -> Result<Portfolio> {
    if !(rho > 0.0) {
        return Err(Error::InvalidRange(format!("interior formula needs rho > 0, got {rho}")));
    }
    let n = market.n_assets();
    if effective_cost.len() != n {
        return Err(Error::Dimension("cost vector length".into()));
    }
    let min_eig = market.min_eigenvalue();
    if min_eig <= PD_TOL {
        return Err(Error::SingularCovariance { min_eigenvalue: min_eig });
    }
    let chol = market
        .sigma
        .clone()
        .cholesky()
        .ok_or(Error::SingularCovariance { min_eigenvalue: min_eig })?;
    let excess = DVector::from_iterator(n, market.mu.iter().zip(effective_cost).map(|(m, c)| m - c));
    let a = chol.solve(&excess);
    let b = chol.solve(&DVector::from_element(n, 1.0));
    let lambda = (a.sum() - rho) / b.sum();
    let weights: Vec<f64> = (0..n).map(|i| (a[i] - lambda * b[i]) / rho).collect();
    let min_weight = weights.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_weight <= 0.0 {
        return Err(Error::InfeasibleInterior { min_weight });
    }
    Ok(Portfolio::new(weights))
}

/// Certificate of `portfolio` for the selected objective.
pub fn kkt_certificate(
    market: &MarketParams,
    prefs: &Preferences,
    spec: &UtilitySpec,
    portfolio: &Portfolio,
) -> KKTCertificate {
    let x = &portfolio.weights;
    let n = x.len();
    let zeros = vec![0.0; n];
    match spec {
        UtilitySpec::LinearCost | UtilitySpec::TurnoverEsg => {
            let cost = prefs.effective_cost();
            let sx = mat_vec(&market.sigma, x);
            let grad: Vec<f64> = (0..n).map(|i| prefs.rho * sx[i] - market.mu[i] + cost[i]).collect();
            let tau = if matches!(spec, UtilitySpec::TurnoverEsg) { prefs.tau } else { 0.0 };
            certificate::certificate(x, &grad, tau, &prefs.x_prev.weights)
        }
        UtilitySpec::NonlinearPower { kappa, p } => {
            let obj = NonlinearCost {
                market,
                rho: prefs.rho,
                kappa,
                p: *p,
            };
            certificate::certificate(x, &obj.gradient(x), 0.0, &zeros)
        }
        UtilitySpec::Robust {
            delta_mu,
            delta_sigma,
        } => {
            let cost = prefs.effective_cost();
            let obj = RobustObjective {
                market,
                rho: prefs.rho,
                cost: &cost,
                delta_mu: *delta_mu,
                delta_sigma: *delta_sigma,
            };
            certificate::certificate(x, &obj.gradient(x), 0.0, &zeros)
        }
    }
}

/// Maximize μᵀx − (ρ/2)xᵀΣx − Σ κ_j x_j^p over the simplex.
pub fn solve_forward_nonlinear(market: &MarketParams, rho: f64, kappa: &[f64], p: f64) -> Result<ForwardSolution> {
    let prefs = Preferences::mean_variance(market.n_assets(), rho);
    solve_forward(
        market,
        &prefs,
        &UtilitySpec::NonlinearPower {
            kappa: kappa.to_vec(),
            p,
        },
    )
}

/// Maximize the worst case of the linear-cost objective over
/// ‖μ − μ̄‖₂ ≤ δ_μ, ‖Σ − Σ̄‖_F ≤ δ_Σ.
pub fn solve_forward_robust(
    market: &MarketParams,
    rho: f64,
    effective_cost: &[f64],
    delta_mu: f64,
    delta_sigma: f64,
) -> Result<ForwardSolution> {
    let mut prefs = Preferences::mean_variance(market.n_assets(), rho);
    prefs.linear_cost = effective_cost.to_vec();
    solve_forward(
        market,
        &prefs,
        &UtilitySpec::Robust {
            delta_mu,
            delta_sigma,
        },
    )
}

/// Value of the selected objective at `portfolio`.
pub fn utility(market: &MarketParams, prefs: &Preferences, spec: &UtilitySpec, portfolio: &Portfolio) -> f64 {
    let x = &portfolio.weights;
    match spec {
        UtilitySpec::LinearCost => mean_variance_cost(market, prefs.rho, &prefs.effective_cost(), x),
        UtilitySpec::TurnoverEsg => {
            let turnover: f64 = x
                .iter()
                .zip(&prefs.x_prev.weights)
                .map(|(a, b)| (a - b).abs())
                .sum();
            mean_variance_cost(market, prefs.rho, &prefs.effective_cost(), x) - prefs.tau * turnover
        }
        UtilitySpec::NonlinearPower { kappa, p } => nonlinear_objective(market, prefs.rho, kappa, *p, x),
        UtilitySpec::Robust {
            delta_mu,
            delta_sigma,
        } => robust_objective(market, prefs.rho, &prefs.effective_cost(), *delta_mu, *delta_sigma, x),
    }
}

fn mean_variance_cost(market: &MarketParams, rho: f64, cost: &[f64], x: &[f64]) -> f64 {
    dot(&market.mu, x) - 0.5 * rho * quad_form(&market.sigma, x) - dot(cost, x)
}

fn nonlinear_objective(market: &MarketParams, rho: f64, kappa: &[f64], p: f64, x: &[f64]) -> f64 {
    let phi: f64 = x.iter().zip(kappa).map(|(&xi, &k)| k * xi.abs().powf(p)).sum();
    dot(&market.mu, x) - 0.5 * rho * quad_form(&market.sigma, x) - phi
}

/// μ̄ᵀx − δ_μ‖x‖₂ − (ρ/2)xᵀΣ̄x − (ρ/2)δ_Σ‖xxᵀ‖_F − cᵀx, using ‖xxᵀ‖_F = ‖x‖₂².
fn robust_objective(market: &MarketParams, rho: f64, cost: &[f64], delta_mu: f64, delta_sigma: f64, x: &[f64]) -> f64 {
    let nx = norm2(x);
    mean_variance_cost(market, rho, cost, x) - delta_mu * nx - 0.5 * rho * delta_sigma * nx * nx
}
