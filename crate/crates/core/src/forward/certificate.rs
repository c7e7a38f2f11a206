//! KKT / variational-inequality certificates on the simplex.
//!
//! Stationarity is written for the minimization of −f:
//! `∇(−f)(x) + τ s + λ𝟏 − ν = 0` with `s ∈ ∂‖x − x_prev‖₁`, `ν ≥ 0`,
//! `ν_i x_i = 0`. Given `x`, each coordinate constrains `∇_i + λ` to an
//! interval; λ is fit by least squares over the coordinates where that
//! interval is a single point and the residual is the worst distance.

use crate::model::KKTCertificate;

const ZERO_TOL: f64 = 1e-10;
const KINK_TOL: f64 = 1e-10;

pub(crate) fn certificate(x: &[f64], grad: &[f64], tau: f64, prev: &[f64]) -> KKTCertificate {
    let n = x.len();
    let intervals: Vec<(f64, f64)> = (0..n)
        .map(|i| admissible_interval(x[i], prev[i], tau))
        .collect();

    let exact: Vec<usize> = (0..n).filter(|&i| intervals[i].0 == intervals[i].1).collect();
    let lambda = if !exact.is_empty() {
        exact.iter().map(|&i| intervals[i].0 - grad[i]).sum::<f64>() / exact.len() as f64
    } else {
        // Minimize max_i dist(grad_i + λ, [lo_i, hi_i]) exactly.
        let lower = (0..n).map(|i| intervals[i].0 - grad[i]).fold(f64::NEG_INFINITY, f64::max);
        let upper = (0..n).map(|i| intervals[i].1 - grad[i]).fold(f64::INFINITY, f64::min);
        match (lower.is_finite(), upper.is_finite()) {
            (true, true) => 0.5 * (lower + upper),
            (true, false) => lower,
            (false, true) => upper,
            (false, false) => 0.0,
        }
    };

    let mut residual = 0.0_f64;
    let mut nu = vec![0.0; n];
    for i in 0..n {
        let v = grad[i] + lambda;
        let (lo, hi) = intervals[i];
        residual = residual.max((lo - v).max(v - hi).max(0.0));
        if x[i] <= ZERO_TOL {
            nu[i] = (v - tau).max(0.0);
        }
    }
    let complementarity = (0..n).map(|i| (nu[i] * x[i]).abs()).fold(0.0, f64::max);

    let vi_gap = (0..n)
        .map(|v| {
            (0..n)
                .map(|j| {
                    let d = if j == v { 1.0 - x[j] } else { -x[j] };
                    grad[j] * d + tau * turnover_slope(x[j], prev[j], d)
                })
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);

    KKTCertificate {
        lambda,
        nu,
        stationarity_residual: residual,
        vi_gap,
        complementarity,
        warnings: Vec::new(),
    }
}

/// Interval that `∇_i(−f) + λ` must fall in for coordinate i to be stationary.
fn admissible_interval(xi: f64, pi: f64, tau: f64) -> (f64, f64) {
    if xi <= ZERO_TOL {
        // ν_i ≥ 0 absorbs any excess; turnover subgradient is −1 if p_i > 0.
        let lo = if tau > 0.0 && pi <= ZERO_TOL { -tau } else { tau };
        (lo, f64::INFINITY)
    } else if tau > 0.0 && (xi - pi).abs() <= KINK_TOL {
        (-tau, tau)
    } else if tau > 0.0 {
        let s = if xi > pi { 1.0 } else { -1.0 };
        (-tau * s, -tau * s)
    } else {
        (0.0, 0.0)
    }
}

/// Directional derivative of |x − p| along d.
fn turnover_slope(xj: f64, pj: f64, d: f64) -> f64 {
    if (xj - pj).abs() <= KINK_TOL {
        d.abs()
    } else if xj > pj {
        d
    } else {
        -d
    }
}
