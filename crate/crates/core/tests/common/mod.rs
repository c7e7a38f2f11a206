//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use invport::{MarketParams, Portfolio, Preferences, UtilitySpec};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn random_market<R: Rng>(rng: &mut R, n: usize) -> MarketParams {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
    let sigma = &a * a.transpose() + DMatrix::identity(n, n) * rng.random_range(0.01..0.1);
    let mu = (0..n).map(|_| rng.random_range(-0.05..0.2)).collect();
    MarketParams::new(mu, sigma).unwrap()
}

pub fn random_simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

pub fn random_prefs<R: Rng>(rng: &mut R, n: usize) -> Preferences {
    Preferences {
        rho: rng.random_range(0.5..10.0),
        tau: rng.random_range(0.0..0.5),
        eta: rng.random_range(0.0..1.0),
        esg_scores: (0..n).map(|_| rng.random()).collect(),
        linear_cost: (0..n).map(|_| rng.random_range(0.0..0.05)).collect(),
        x_prev: Portfolio::new(random_simplex(rng, n)),
    }
}

fn quad(sigma: &DMatrix<f64>, x: &[f64]) -> f64 {
    let mut q = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            q += x[i] * sigma[(i, j)] * x[j];
        }
    }
    q
}

/// Objective written out term by term, independently of the library.
pub fn objective(m: &MarketParams, p: &Preferences, spec: &UtilitySpec, x: &[f64]) -> f64 {
    let n = x.len();
    let mut mean = 0.0;
    let mut lin = 0.0;
    let mut turn = 0.0;
    let mut nx2 = 0.0;
    for i in 0..n {
        mean += m.mu[i] * x[i];
        lin += (p.linear_cost[i] + p.eta * p.esg_scores[i]) * x[i];
        turn += (x[i] - p.x_prev.weights[i]).abs();
        nx2 += x[i] * x[i];
    }
    let var = 0.5 * p.rho * quad(&m.sigma, x);
    match spec {
        UtilitySpec::LinearCost => mean - var - lin,
        UtilitySpec::TurnoverEsg => mean - var - lin - p.tau * turn,
        UtilitySpec::NonlinearPower { kappa, p: pw } => {
            mean - var - (0..n).map(|i| kappa[i] * x[i].powf(*pw)).sum::<f64>()
        }
        UtilitySpec::Robust { delta_mu, delta_sigma } => {
            mean - delta_mu * nx2.sqrt() - var - 0.5 * p.rho * delta_sigma * nx2 - lin
        }
    }
}

/// Maximum of `f` over the simplex lattice with spacing `1/steps` (n ≤ 3).
pub fn grid_max(n: usize, steps: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
    let h = 1.0 / steps as f64;
    let mut best = f64::NEG_INFINITY;
    match n {
        1 => best = f(&[1.0]),
        2 => {
            for i in 0..=steps {
                let a = i as f64 * h;
                best = best.max(f(&[a, 1.0 - a]));
            }
        }
        3 => {
            for i in 0..=steps {
                for j in 0..=steps - i {
                    let (a, b) = (i as f64 * h, j as f64 * h);
                    best = best.max(f(&[a, b, (1.0 - a - b).max(0.0)]));
                }
            }
        }
        _ => panic!("grid oracle supports n <= 3"),
    }
    best
}

/// `x = Σ⁻¹(μ − c − λ𝟏)/ρ` with λ chosen so that 𝟏ᵀx = 1.
pub fn closed_form_interior(m: &MarketParams, rho: f64, c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let inv = m.sigma.clone().try_inverse().unwrap();
    let ones = DVector::from_element(n, 1.0);
    let a = DVector::from_iterator(n, (0..n).map(|i| m.mu[i] - c[i]));
    let lambda = ((ones.transpose() * &inv * &a)[(0, 0)] - rho) / (ones.transpose() * &inv * &ones)[(0, 0)];
    let x = &inv * (a - ones * lambda) / rho;
    x.iter().copied().collect()
}
