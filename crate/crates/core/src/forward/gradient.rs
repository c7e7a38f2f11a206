//! Projected gradient on the simplex for the smooth nonlinear-cost and
//! robust objectives, followed by a Newton polish on the detected support.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{dot, mat_vec, norm2, norm_inf};
use crate::model::MarketParams;

pub(crate) const MAX_ITER: usize = 50_000;
pub(crate) const WARM_ITER: usize = 2_000;
const STEP_TOL: f64 = 1e-10;

/// Euclidean projection onto {x ≥ 0, 1ᵀx = 1} (sort-based, O(n log n)).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&vi| (vi - theta).max(0.0)).collect()
}

/// Objective to be *minimized* (negated utility) over the simplex.
pub(crate) trait SmoothObjective {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// Hessian at a point whose positive coordinates are `support`.
    fn hessian(&self, x: &[f64], support: &[usize]) -> DMatrix<f64>;
    /// Global Lipschitz bound of the gradient on the simplex, when one exists.
    fn lipschitz(&self) -> f64;
    /// Newton refinement of an approximate minimizer; `None` keeps `x`.
    fn polish(&self, x: &[f64]) -> Option<Vec<f64>>
    where
        Self: Sized,
    {
        polish_on_support(self, x)
    }
}

pub(crate) struct NonlinearCost<'a> {
    pub market: &'a MarketParams,
    pub rho: f64,
    pub kappa: &'a [f64],
    pub p: f64,
}

impl NonlinearCost<'_> {
    fn marginal_cost(&self, xi: f64, k: f64) -> f64 {
        if self.p == 1.0 {
            k
        } else if xi <= 0.0 {
            0.0
        } else {
            self.p * k * xi.powf(self.p - 1.0)
        }
    }
}

impl SmoothObjective for NonlinearCost<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let cost: f64 = x
            .iter()
            .zip(self.kappa)
            .map(|(&xi, &k)| k * xi.max(0.0).powf(self.p))
            .sum();
        -dot(&self.market.mu, x) + 0.5 * self.rho * dot(x, &mat_vec(&self.market.sigma, x)) + cost
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let sx = mat_vec(&self.market.sigma, x);
        (0..x.len())
            .map(|i| -self.market.mu[i] + self.rho * sx[i] + self.marginal_cost(x[i], self.kappa[i]))
            .collect()
    }

    fn hessian(&self, x: &[f64], support: &[usize]) -> DMatrix<f64> {
        let m = support.len();
        DMatrix::from_fn(m, m, |a, b| {
            let (i, j) = (support[a], support[b]);
            let mut h = self.rho * self.market.sigma[(i, j)];
            if i == j && self.p != 1.0 {
                h += self.p * (self.p - 1.0) * self.kappa[i] * x[i].powf(self.p - 2.0);
            }
            h
        })
    }

    fn lipschitz(&self) -> f64 {
        let base = self.rho * self.market.max_eigenvalue().max(0.0);
        if self.p >= 2.0 {
            // x_j ≤ 1 on the simplex bounds x^{p-2}.
            let kmax = self.kappa.iter().cloned().fold(0.0, f64::max);
            base + self.p * (self.p - 1.0) * kmax
        } else {
            base
        }
    }

    fn polish(&self, x: &[f64]) -> Option<Vec<f64>> {
        if self.p > 1.0 && self.p < 2.0 {
            power_polish(self, x)
        } else {
            polish_on_support(self, x)
        }
    }
}

/// Active-set Newton for 1 < p < 2 in the variables y_i = x_i^{p−1}
/// (x_i itself where κ_i = 0). Optimal weights of marginal assets are
/// positive but can be far below machine epsilon; in y the stationarity
/// system stays well conditioned. Coordinates that reach zero leave the
/// support; the most violated excluded coordinate joins it.
fn power_polish(c: &NonlinearCost, x0: &[f64]) -> Option<Vec<f64>> {
    let n = x0.len();
    let q = 1.0 / (c.p - 1.0);
    let in_y = |i: usize| c.kappa[i] > 0.0;
    let mut x = x0.to_vec();
    let mut support: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();
    let g0 = c.gradient(&x);
    let on: Vec<usize> = (0..n).filter(|&i| support[i]).collect();
    if on.is_empty() {
        return None;
    }
    let mut lambda = -on.iter().map(|&i| g0[i]).sum::<f64>() / on.len() as f64;

    for _ in 0..4 * n + 8 {
        for _ in 0..60 {
            let s: Vec<usize> = (0..n).filter(|&i| support[i]).collect();
            let m = s.len();
            let g = c.gradient(&x);
            let mut rhs = DVector::zeros(m + 1);
            for (a, &i) in s.iter().enumerate() {
                rhs[a] = -(g[i] + lambda);
            }
            rhs[m] = 1.0 - s.iter().map(|&i| x[i]).sum::<f64>();
            if rhs.amax() < 1e-15 {
                break;
            }
            // dx_j/dz_j for each support coordinate.
            let dx: Vec<f64> = s
                .iter()
                .map(|&j| if in_y(j) { q * x[j].powf((c.p - 1.0) * (q - 1.0)) } else { 1.0 })
                .collect();
            let mut jac = DMatrix::zeros(m + 1, m + 1);
            for (a, &i) in s.iter().enumerate() {
                for (b, &j) in s.iter().enumerate() {
                    jac[(a, b)] = c.rho * c.market.sigma[(i, j)] * dx[b];
                }
                if in_y(i) {
                    jac[(a, a)] += c.p * c.kappa[i];
                }
                jac[(a, m)] = 1.0;
                jac[(m, a)] = dx[a];
            }
            let step = jac.lu().solve(&rhs)?;
            let z: Vec<f64> = s
                .iter()
                .map(|&i| if in_y(i) { x[i].powf(c.p - 1.0) } else { x[i] })
                .collect();
            let mut t = 1.0_f64;
            let mut blocking = None;
            for a in 0..m {
                if step[a] < 0.0 && z[a] + step[a] <= 0.0 {
                    let ta = -z[a] / step[a];
                    if ta < t {
                        t = ta;
                        blocking = Some(s[a]);
                    }
                }
            }
            for (a, &i) in s.iter().enumerate() {
                let za = (z[a] + t * step[a]).max(0.0);
                x[i] = if in_y(i) { za.powf(q) } else { za };
            }
            lambda += t * step[m];
            if let Some(j) = blocking {
                x[j] = 0.0;
                support[j] = false;
                if !support.iter().any(|&b| b) {
                    return None;
                }
            }
        }
        let g = c.gradient(&x);
        let worst = (0..n)
            .filter(|&j| !support[j])
            .map(|j| (j, g[j] + lambda))
            .filter(|&(_, v)| v < -1e-13)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match worst {
            None => {
                return x.iter().all(|v| v.is_finite()).then_some(x);
            }
            Some((j, v)) => {
                support[j] = true;
                x[j] = if in_y(j) { (-0.5 * v / (c.p * c.kappa[j])).powf(q) } else { 1e-12 };
            }
        }
    }
    None
}

pub(crate) struct RobustObjective<'a> {
    pub market: &'a MarketParams,
    pub rho: f64,
    pub cost: &'a [f64],
    pub delta_mu: f64,
    pub delta_sigma: f64,
}

impl SmoothObjective for RobustObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let sq = dot(x, x);
        -dot(&self.market.mu, x)
            + self.delta_mu * sq.sqrt()
            + 0.5 * self.rho * dot(x, &mat_vec(&self.market.sigma, x))
            + 0.5 * self.rho * self.delta_sigma * sq
            + dot(self.cost, x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let sx = mat_vec(&self.market.sigma, x);
        let nx = norm2(x);
        (0..x.len())
            .map(|i| {
                let ball = if nx > 0.0 { self.delta_mu * x[i] / nx } else { 0.0 };
                -self.market.mu[i]
                    + ball
                    + self.rho * sx[i]
                    + self.rho * self.delta_sigma * x[i]
                    + self.cost[i]
            })
            .collect()
    }

    fn hessian(&self, x: &[f64], support: &[usize]) -> DMatrix<f64> {
        let nx = norm2(x);
        let m = support.len();
        DMatrix::from_fn(m, m, |a, b| {
            let (i, j) = (support[a], support[b]);
            let mut h = self.rho * self.market.sigma[(i, j)];
            if i == j {
                h += self.rho * self.delta_sigma + self.delta_mu / nx;
            }
            h - self.delta_mu * x[i] * x[j] / (nx * nx * nx)
        })
    }

    fn lipschitz(&self) -> f64 {
        let n = self.market.n_assets() as f64;
        self.rho * (self.market.max_eigenvalue().max(0.0) + self.delta_sigma)
            + self.delta_mu * n.sqrt()
    }
}

pub(crate) struct GradientRun {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Projected gradient with step 1/L; backtracks when the quadratic upper
/// bound fails (only possible when `lipschitz` is not a true bound).
pub(crate) fn projected_gradient<O: SmoothObjective>(obj: &O, start: &[f64], max_iter: usize) -> GradientRun {
    let lip = obj.lipschitz();
    let s0 = if lip > 1e-12 { 1.0 / lip } else { 1.0 };
    let mut s = s0;
    let mut x = project_simplex(start);
    for k in 1..=max_iter {
        let g = obj.gradient(&x);
        let f = obj.value(&x);
        let mut x_new;
        loop {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - s * gi).collect();
            x_new = project_simplex(&trial);
            let diff: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            let bound = f + dot(&g, &diff) + dot(&diff, &diff) / (2.0 * s);
            if obj.value(&x_new) <= bound + 1e-15 * (1.0 + f.abs()) || s < 1e-18 {
                break;
            }
            s *= 0.5;
        }
        let moved = x_new
            .iter()
            .zip(&x)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        x = x_new;
        if moved * (s0 / s) < STEP_TOL {
            return GradientRun {
                x,
                iterations: k,
                converged: true,
            };
        }
        s = (2.0 * s).min(s0);
    }
    GradientRun {
        x,
        iterations: max_iter,
        converged: false,
    }
}

/// Newton iterations on the KKT system restricted to the support of `x`.
/// Returns `None` if the step leaves the positive orthant or the system is
/// singular; the caller keeps the unpolished point in that case.
pub(crate) fn polish_on_support<O: SmoothObjective>(obj: &O, x: &[f64]) -> Option<Vec<f64>> {
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 1e-9).collect();
    let m = support.len();
    if m == 0 {
        return None;
    }
    let mut y: Vec<f64> = vec![0.0; x.len()];
    let total: f64 = support.iter().map(|&i| x[i]).sum();
    for &i in &support {
        y[i] = x[i] / total;
    }
    for _ in 0..30 {
        let g = obj.gradient(&y);
        let h = obj.hessian(&y, &support);
        let mut kkt = DMatrix::zeros(m + 1, m + 1);
        kkt.view_mut((0, 0), (m, m)).copy_from(&h);
        for a in 0..m {
            kkt[(a, m)] = 1.0;
            kkt[(m, a)] = 1.0;
        }
        let mut rhs = DVector::zeros(m + 1);
        for (a, &i) in support.iter().enumerate() {
            rhs[a] = -g[i];
        }
        let sol = kkt.lu().solve(&rhs)?;
        let mut step = 0.0_f64;
        for (a, &i) in support.iter().enumerate() {
            y[i] += sol[a];
            step = step.max(sol[a].abs());
            if y[i] <= 0.0 {
                return None;
            }
        }
        if step < 1e-15 {
            break;
        }
    }
    if y.iter().any(|v| !v.is_finite()) || !norm_inf(&obj.gradient(&y)).is_finite() {
        return None;
    }
    Some(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn projection_of_feasible_point_is_identity() {
        let v = [0.2, 0.3, 0.5];
        let p = project_simplex(&v);
        for (a, b) in p.iter().zip(&v) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_clips_to_vertex() {
        assert_eq!(project_simplex(&[5.0, 0.0, -1.0]), vec![1.0, 0.0, 0.0]);
    }

    fn central_difference_check(obj: &impl SmoothObjective, x: &[f64]) {
        let g = obj.gradient(x);
        for i in 0..x.len() {
            let (mut up, mut down) = (x.to_vec(), x.to_vec());
            up[i] += 1e-6;
            down[i] -= 1e-6;
            let fd = (obj.value(&up) - obj.value(&down)) / 2e-6;
            assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0), "coordinate {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.random_range(2..6);
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
            let sigma = &a * a.transpose() + DMatrix::identity(n, n) * 0.05;
            let market = MarketParams::new((0..n).map(|_| rng.random_range(-0.1..0.2)).collect(), sigma).unwrap();
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let x: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let kappa: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.3)).collect();
            let cost: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.05)).collect();
            let rho = rng.random_range(0.5..10.0);
            for p in [1.1, 1.5, 2.0] {
                central_difference_check(&NonlinearCost { market: &market, rho, kappa: &kappa, p }, &x);
            }
            let robust = RobustObjective {
                market: &market,
                rho,
                cost: &cost,
                delta_mu: rng.random_range(0.0..0.1),
                delta_sigma: rng.random_range(0.0..0.5),
            };
            central_difference_check(&robust, &x);
        }
    }

    proptest! {
        #[test]
        fn projection_is_feasible_and_optimal(v in prop::collection::vec(-3.0f64..3.0, 1..8)) {
            let p = project_simplex(&v);
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            // Variational characterization: ⟨v − p, y − p⟩ ≤ 0 for all vertices y.
            for j in 0..v.len() {
                let mut ip = 0.0;
                for i in 0..v.len() {
                    let y = if i == j { 1.0 } else { 0.0 };
                    ip += (v[i] - p[i]) * (y - p[i]);
                }
                prop_assert!(ip <= 1e-12);
            }
        }
    }
}
