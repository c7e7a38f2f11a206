//! Synthetic markets, returns and investor draws.
//!
//! Returns follow a k-factor model `r_t = μ + F f_t + ε_t` with
//! `Σ = FFᵀ + diag(ψ)`, optionally with per-asset GARCH(1,1) idiosyncratic
//! variance. Observation sets pair each period's market with the investor's
//! optimal (optionally noised) portfolio.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{solve_forward_warm, ForwardSolution};
use crate::linalg;
use crate::model::{MarketParams, Portfolio, Preferences, ShockSpec, UtilitySpec};
use crate::regret::apply_shock;

/// Per-asset GARCH(1,1): `σ²_{t+1} = α₀ + α₁ε²_t + βσ²_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub alpha0: Vec<f64>,
    pub alpha1: f64,
    pub beta: f64,
}

impl GarchParams {
    pub const DEFAULT_ALPHA1: f64 = 0.10;
    pub const DEFAULT_BETA: f64 = 0.85;

    /// Parameters whose unconditional variance equals `target` per asset.
    pub fn targeting(target: &[f64], alpha1: f64, beta: f64) -> Self {
        let persistence = 1.0 - alpha1 - beta;
        Self {
            alpha0: target.iter().map(|v| v * persistence).collect(),
            alpha1,
            beta,
        }
    }

    pub fn unconditional_variance(&self) -> Vec<f64> {
        let persistence = 1.0 - self.alpha1 - self.beta;
        self.alpha0.iter().map(|a| a / persistence).collect()
    }

    pub fn check(&self) -> Result<()> {
        if self.alpha0.iter().any(|&a| !(a > 0.0)) || self.alpha1 < 0.0 || self.beta < 0.0 {
            return Err(Error::InvalidRange("garch needs alpha0 > 0, alpha1 >= 0, beta >= 0".into()));
        }
        if self.alpha1 + self.beta >= 1.0 {
            return Err(Error::InvalidRange(format!(
                "garch alpha1 + beta = {} is not below 1",
                self.alpha1 + self.beta
            )));
        }
        Ok(())
    }

    fn step(&self, h: &mut [f64], eps: &[f64]) {
        for j in 0..h.len() {
            h[j] = self.alpha0[j] + self.alpha1 * eps[j] * eps[j] + self.beta * h[j];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    /// n×k loadings F.
    #[serde(with = "linalg::rows")]
    pub loadings: DMatrix<f64>,
    /// Idiosyncratic variances ψ_j.
    pub idio_var: Vec<f64>,
    pub mu: Vec<f64>,
    pub garch: Option<GarchParams>,
}

impl FactorModel {
    pub fn n_assets(&self) -> usize {
        self.mu.len()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.mu.len();
        if self.loadings.nrows() != n || self.idio_var.len() != n {
            return Err(Error::Dimension("factor model rows disagree".into()));
        }
        if self.idio_var.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidRange("idiosyncratic variances must be positive".into()));
        }
        if let Some(g) = &self.garch {
            g.check()?;
            if g.alpha0.len() != n {
                return Err(Error::Dimension("garch alpha0 length".into()));
            }
        }
        Ok(())
    }

    /// Same model with GARCH targeting the drawn idiosyncratic variances.
    pub fn with_default_garch(mut self) -> Self {
        self.garch = Some(GarchParams::targeting(
            &self.idio_var,
            GarchParams::DEFAULT_ALPHA1,
            GarchParams::DEFAULT_BETA,
        ));
        self
    }
}

fn normal(mean: f64, var: f64) -> Result<Normal<f64>> {
    Normal::new(mean, var.sqrt()).map_err(|e| Error::InvalidRange(format!("normal({mean}, {var}): {e}")))
}

#[allow(clippy::too_many_arguments)]
pub fn sample_factor_model<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    k: usize,
    sigma_f_sq: f64,
    var_lo: f64,
    var_hi: f64,
    mu_bar: f64,
    sigma_mu_sq: f64,
) -> Result<FactorModel> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidRange(format!("need n, k >= 1, got n={n}, k={k}")));
    }
    if !(var_lo > 0.0) || var_hi < var_lo {
        return Err(Error::InvalidRange(format!("idiosyncratic range [{var_lo}, {var_hi}]")));
    }
    if !(sigma_f_sq >= 0.0) || !(sigma_mu_sq >= 0.0) {
        return Err(Error::InvalidRange("variances must be nonnegative".into()));
    }
    let f_dist = normal(0.0, sigma_f_sq)?;
    let loadings = DMatrix::from_fn(n, k, |_, _| f_dist.sample(rng));
    let idio_var = if var_hi > var_lo {
        let u = Uniform::new(var_lo, var_hi).map_err(|e| Error::InvalidRange(e.to_string()))?;
        (0..n).map(|_| u.sample(rng)).collect()
    } else {
        vec![var_lo; n]
    };
    let mu = draw_mu(rng, n, mu_bar, sigma_mu_sq)?;
    Ok(FactorModel {
        loadings,
        idio_var,
        mu,
        garch: None,
    })
}

fn draw_mu<R: Rng + ?Sized>(rng: &mut R, n: usize, mu_bar: f64, sigma_mu_sq: f64) -> Result<Vec<f64>> {
    let d = normal(mu_bar, sigma_mu_sq)?;
    Ok((0..n).map(|_| d.sample(rng)).collect())
}

/// `FFᵀ + diag(ψ)`.
pub fn implied_covariance(model: &FactorModel) -> DMatrix<f64> {
    covariance_with(&model.loadings, &model.idio_var)
}

fn covariance_with(loadings: &DMatrix<f64>, idio: &[f64]) -> DMatrix<f64> {
    let mut sigma = loadings * loadings.transpose();
    for (j, v) in idio.iter().enumerate() {
        sigma[(j, j)] += v;
    }
    // Exact symmetry regardless of summation order.
    let n = sigma.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
            sigma[(i, j)] = s;
            sigma[(j, i)] = s;
        }
    }
    sigma
}

/// T×n matrix of factor-model returns.
pub fn sample_returns<R: Rng + ?Sized>(rng: &mut R, model: &FactorModel, periods: usize) -> DMatrix<f64> {
    let n = model.n_assets();
    let k = model.loadings.ncols();
    let mut out = DMatrix::zeros(periods, n);
    let mut h = match &model.garch {
        Some(g) => g.unconditional_variance(),
        None => model.idio_var.clone(),
    };
    let mut eps = vec![0.0; n];
    for t in 0..periods {
        let f: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        for j in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            eps[j] = h[j].sqrt() * z;
            let systematic: f64 = (0..k).map(|c| model.loadings[(j, c)] * f[c]).sum();
            out[(t, j)] = model.mu[j] + systematic + eps[j];
        }
        if let Some(g) = &model.garch {
            g.step(&mut h, &eps);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchetypeKind {
    Conservative,
    Neutral,
    EsgOriented,
}

impl ArchetypeKind {
    pub const ALL: [ArchetypeKind; 3] = [Self::Conservative, Self::Neutral, Self::EsgOriented];

    /// Closed (ρ, τ, η) boxes; degenerate intervals are fixed values.
    pub fn ranges(self) -> [(f64, f64); 3] {
        match self {
            Self::Conservative => [(5.0, 10.0), (0.0, 0.0), (0.0, 0.0)],
            Self::Neutral => [(1.0, 3.0), (0.1, 0.5), (0.0, 0.0)],
            Self::EsgOriented => [(2.0, 4.0), (0.1, 0.5), (0.5, 2.0)],
        }
    }
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Uniform draw inside the archetype's box. ESG scores are i.i.d. U[0,1]
/// for every kind; they only matter when η > 0.
pub fn draw_archetype<R: Rng + ?Sized>(rng: &mut R, kind: ArchetypeKind, n: usize) -> Preferences {
    let [r, t, e] = kind.ranges();
    let rho = uniform_in(rng, r);
    let tau = uniform_in(rng, t);
    let eta = uniform_in(rng, e);
    let esg_scores = draw_esg_scores(rng, n);
    Preferences {
        rho,
        tau,
        eta,
        esg_scores,
        linear_cost: vec![0.0; n],
        x_prev: Portfolio::equal(n),
    }
}

pub fn draw_esg_scores<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// Latin hypercube: `m` points, one per stratum in each dimension.
pub fn lhs_sample<R: Rng + ?Sized>(rng: &mut R, ranges: &[(f64, f64)], m: usize) -> Result<Vec<Vec<f64>>> {
    if m == 0 {
        return Err(Error::InvalidRange("latin hypercube needs m >= 1".into()));
    }
    if let Some((lo, hi)) = ranges.iter().find(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
        return Err(Error::InvalidRange(format!("latin hypercube range [{lo}, {hi}]")));
    }
    let mut points = vec![vec![0.0; ranges.len()]; m];
    for (d, &(lo, hi)) in ranges.iter().enumerate() {
        let mut strata: Vec<usize> = (0..m).collect();
        strata.shuffle(rng);
        for (i, s) in strata.into_iter().enumerate() {
            let u: f64 = rng.random();
            points[i][d] = lo + (hi - lo) * (s as f64 + u) / m as f64;
        }
    }
    Ok(points)
}

/// One observed decision: the market it was made in, the holdings it
/// moved from, and the chosen portfolio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub market: MarketParams,
    pub x_prev: Portfolio,
    pub portfolio: Portfolio,
}

/// Observations sharing one investor's known cost vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub observations: Vec<Observation>,
    pub esg_scores: Vec<f64>,
    pub linear_cost: Vec<f64>,
}

impl ObservationSet {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn n_assets(&self) -> usize {
        self.esg_scores.len()
    }

    /// Candidate preferences for period `t`: the given scalars with the
    /// set's cost vectors and that period's observed previous holdings.
    pub fn preferences(&self, t: usize, rho: f64, tau: f64, eta: f64) -> Preferences {
        Preferences {
            rho,
            tau,
            eta,
            esg_scores: self.esg_scores.clone(),
            linear_cost: self.linear_cost.clone(),
            x_prev: self.observations[t].x_prev.clone(),
        }
    }

    /// Periods `range` as a standalone set.
    pub fn slice(&self, range: std::ops::Range<usize>) -> ObservationSet {
        ObservationSet {
            observations: self.observations[range].to_vec(),
            esg_scores: self.esg_scores.clone(),
            linear_cost: self.linear_cost.clone(),
        }
    }

    pub fn markets(&self) -> Vec<MarketParams> {
        self.observations.iter().map(|o| o.market.clone()).collect()
    }
}

/// Which preferences generate the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InvestorSpec {
    Archetype { archetype: ArchetypeKind },
    Fixed { rho: f64, tau: f64, eta: f64 },
    /// Time-varying risk aversion; the path length must equal `periods`.
    RhoPath { rho: Vec<f64>, tau: f64, eta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n: usize,
    pub k: usize,
    pub periods: usize,
    pub sigma_f_sq: f64,
    pub var_lo: f64,
    pub var_hi: f64,
    pub mu_bar: f64,
    pub sigma_mu_sq: f64,
    pub garch: bool,
    pub redraw_loadings: bool,
    /// Mixing weight ω of Dirichlet(𝟏) noise on observed portfolios.
    pub noise: f64,
    /// Exponent p of a Σ κ_j x_j^p cost with κ = effective cost; `None`
    /// uses the linear turnover/ESG objective.
    pub cost_power: Option<f64>,
    /// Environment the investor actually faces; observations record the
    /// unshocked market.
    pub shock: ShockSpec,
    pub investor: InvestorSpec,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n: 10,
            k: 3,
            periods: 100,
            sigma_f_sq: 0.25,
            var_lo: 0.05,
            var_hi: 0.20,
            mu_bar: 0.05,
            sigma_mu_sq: 0.01,
            garch: false,
            redraw_loadings: false,
            noise: 0.0,
            cost_power: None,
            shock: ShockSpec::IDENTITY,
            investor: InvestorSpec::Archetype {
                archetype: ArchetypeKind::Neutral,
            },
        }
    }
}

impl GeneratorConfig {
    pub fn check(&self) -> Result<()> {
        if self.periods == 0 {
            return Err(Error::InvalidRange("periods must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::InvalidRange(format!("noise weight {} outside [0, 1]", self.noise)));
        }
        if let Some(p) = self.cost_power {
            if !(p >= 1.0) {
                return Err(Error::InvalidRange(format!("cost power {p} < 1")));
            }
        }
        if !self.shock.is_valid() {
            return Err(Error::InvalidRange(format!("invalid shock {:?}", self.shock)));
        }
        if let InvestorSpec::RhoPath { rho, .. } = &self.investor {
            if rho.len() != self.periods {
                return Err(Error::LengthMismatch(format!(
                    "rho path has {} entries for {} periods",
                    rho.len(),
                    self.periods
                )));
            }
        }
        Ok(())
    }
}

/// Output of [`generate_observations`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTrial {
    pub model: FactorModel,
    /// True preferences with `x_prev` at the initial equal weights.
    pub truth: Preferences,
    /// True ρ per period (constant unless the investor follows a path).
    pub rho_path: Vec<f64>,
    pub data: ObservationSet,
    /// Noise-free optima, one per period.
    pub solutions: Vec<ForwardSolution>,
}

/// Draw a model and preferences, then record the investor's choice in each
/// of `periods` markets (faced under `cfg.shock`). μ is redrawn every period; F only when
/// `redraw_loadings` is set; with GARCH, Σᵗ uses the conditional
/// idiosyncratic variances.
pub fn generate_observations<R: Rng + ?Sized>(rng: &mut R, cfg: &GeneratorConfig) -> Result<SyntheticTrial> {
    cfg.check()?;
    let n = cfg.n;
    let mut model = sample_factor_model(
        rng,
        n,
        cfg.k,
        cfg.sigma_f_sq,
        cfg.var_lo,
        cfg.var_hi,
        cfg.mu_bar,
        cfg.sigma_mu_sq,
    )?;
    if cfg.garch {
        model = model.with_default_garch();
    }
    let truth = match &cfg.investor {
        InvestorSpec::Archetype { archetype } => draw_archetype(rng, *archetype, n),
        InvestorSpec::Fixed { rho, tau, eta } => fixed_preferences(rng, n, *rho, *tau, *eta),
        InvestorSpec::RhoPath { rho, tau, eta } => fixed_preferences(rng, n, rho[0], *tau, *eta),
    };
    let rho_path = match &cfg.investor {
        InvestorSpec::RhoPath { rho, .. } => rho.clone(),
        _ => vec![truth.rho; cfg.periods],
    };
    let k = cfg.k;
    let f_dist = normal(0.0, cfg.sigma_f_sq)?;

    let mut loadings = model.loadings.clone();
    let mut h = match &model.garch {
        Some(g) => g.unconditional_variance(),
        None => model.idio_var.clone(),
    };
    let mut x_prev = Portfolio::equal(n);
    let mut observations = Vec::with_capacity(cfg.periods);
    let mut solutions = Vec::with_capacity(cfg.periods);
    for t in 0..cfg.periods {
        let mu = if t == 0 {
            model.mu.clone()
        } else {
            draw_mu(rng, n, cfg.mu_bar, cfg.sigma_mu_sq)?
        };
        if cfg.redraw_loadings && t > 0 {
            loadings = DMatrix::from_fn(n, k, |_, _| f_dist.sample(rng));
        }
        let market = MarketParams::new(mu, covariance_with(&loadings, &h))?;
        let prefs = truth.with_params(rho_path[t], truth.tau, truth.eta).with_x_prev(x_prev.clone());
        let (faced, prefs) = apply_shock(&market, &prefs, &cfg.shock);
        let spec = match cfg.cost_power {
            Some(p) => UtilitySpec::NonlinearPower {
                kappa: prefs.effective_cost(),
                p,
            },
            None => UtilitySpec::TurnoverEsg,
        };
        let sol = solve_forward_warm(&faced, &prefs, &spec, &x_prev).map_err(|e| e.in_period(t))?;
        let observed = if cfg.noise > 0.0 {
            let w = flat_dirichlet(rng, n);
            Portfolio::new(
                sol.portfolio
                    .weights
                    .iter()
                    .zip(&w)
                    .map(|(x, z)| (1.0 - cfg.noise) * x + cfg.noise * z)
                    .collect(),
            )
        } else {
            sol.portfolio.clone()
        };
        if let Some(g) = &model.garch {
            let eps: Vec<f64> = h
                .iter()
                .map(|v| v.sqrt() * rng.sample::<f64, _>(StandardNormal))
                .collect();
            g.step(&mut h, &eps);
        }
        observations.push(Observation {
            market,
            x_prev: x_prev.clone(),
            portfolio: observed.clone(),
        });
        solutions.push(sol);
        x_prev = observed;
    }

    let data = ObservationSet {
        observations,
        esg_scores: truth.esg_scores.clone(),
        linear_cost: truth.linear_cost.clone(),
    };
    Ok(SyntheticTrial {
        model,
        truth,
        rho_path,
        data,
        solutions,
    })
}

/// Dirichlet(𝟏) as normalized i.i.d. Exp(1) draws.
fn flat_dirichlet<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| rng.sample(Exp1)).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

fn fixed_preferences<R: Rng + ?Sized>(rng: &mut R, n: usize, rho: f64, tau: f64, eta: f64) -> Preferences {
    Preferences {
        rho,
        tau,
        eta,
        esg_scores: draw_esg_scores(rng, n),
        linear_cost: vec![0.0; n],
        x_prev: Portfolio::equal(n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn defaults_draw_and_validate() {
        let m = sample_factor_model(&mut rng(1), 10, 3, 0.25, 0.05, 0.20, 0.05, 0.01).unwrap();
        m.check().unwrap();
        assert_eq!(m.loadings.shape(), (10, 3));
        assert!(m.idio_var.iter().all(|v| (0.05..=0.20).contains(v)));
    }

    #[test]
    fn zero_loading_variance_gives_zero_loadings() {
        let m = sample_factor_model(&mut rng(2), 4, 2, 0.0, 0.05, 0.20, 0.05, 0.01).unwrap();
        assert!(m.loadings.iter().all(|&f| f == 0.0));
        let sigma = implied_covariance(&m);
        assert_eq!(sigma, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(m.idio_var.clone())));
    }

    #[test]
    fn invalid_ranges_rejected() {
        assert!(sample_factor_model(&mut rng(0), 0, 3, 0.25, 0.05, 0.2, 0.0, 0.01).is_err());
        assert!(sample_factor_model(&mut rng(0), 3, 3, 0.25, 0.0, 0.2, 0.0, 0.01).is_err());
        assert!(sample_factor_model(&mut rng(0), 3, 3, 0.25, 0.3, 0.2, 0.0, 0.01).is_err());
    }

    #[test]
    fn rank_one_covariance() {
        let m = FactorModel {
            loadings: DMatrix::from_element(4, 1, 1.0),
            idio_var: vec![0.0; 4],
            mu: vec![0.0; 4],
            garch: None,
        };
        let sigma = implied_covariance(&m);
        assert!(sigma.iter().all(|&v| v == 1.0));
        let (lo, hi) = linalg::eigen_bounds(&sigma);
        assert!(lo.abs() < 1e-12 && (hi - 4.0).abs() < 1e-12);
    }

    #[test]
    fn noise_free_returns_equal_mean() {
        let m = FactorModel {
            loadings: DMatrix::zeros(3, 1),
            idio_var: vec![1e-12; 3],
            mu: vec![0.01, 0.02, 0.03],
            garch: None,
        };
        let r = sample_returns(&mut rng(3), &m, 50);
        for t in 0..50 {
            for j in 0..3 {
                assert!((r[(t, j)] - m.mu[j]).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn garch_check_rejects_nonstationary() {
        let g = GarchParams::targeting(&[0.1], 0.5, 0.5);
        assert!(g.check().is_err());
    }

    #[test]
    fn archetype_draws_respect_ranges() {
        let mut r = rng(4);
        for _ in 0..200 {
            let c = draw_archetype(&mut r, ArchetypeKind::Conservative, 3);
            assert!((5.0..=10.0).contains(&c.rho) && c.tau == 0.0 && c.eta == 0.0);
            let n = draw_archetype(&mut r, ArchetypeKind::Neutral, 3);
            assert!((1.0..=3.0).contains(&n.rho) && (0.1..=0.5).contains(&n.tau) && n.eta == 0.0);
            let e = draw_archetype(&mut r, ArchetypeKind::EsgOriented, 3);
            assert!((2.0..=4.0).contains(&e.rho) && (0.5..=2.0).contains(&e.eta));
            assert!(e.esg_scores.iter().all(|s| (0.0..1.0).contains(s)));
        }
    }

    #[test]
    fn lhs_has_one_point_per_quartile() {
        let pts = lhs_sample(&mut rng(5), &[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], 4).unwrap();
        for d in 0..3 {
            let mut q: Vec<usize> = pts.iter().map(|p| (p[d] * 4.0).floor() as usize).collect();
            q.sort();
            assert_eq!(q, vec![0, 1, 2, 3]);
        }
        let one = lhs_sample(&mut rng(5), &[(2.0, 3.0)], 1).unwrap();
        assert!((2.0..=3.0).contains(&one[0][0]));
        assert!(lhs_sample(&mut rng(5), &[(0.0, 1.0)], 0).is_err());
        assert!(lhs_sample(&mut rng(5), &[(1.0, 0.0)], 3).is_err());
    }

    #[test]
    fn single_period_dataset() {
        let cfg = GeneratorConfig {
            periods: 1,
            ..GeneratorConfig::default()
        };
        let trial = generate_observations(&mut rng(6), &cfg).unwrap();
        assert_eq!(trial.data.len(), 1);
        assert_eq!(trial.data.observations[0].x_prev, Portfolio::equal(10));
    }

    #[test]
    fn generation_is_deterministic_and_certified() {
        let cfg = GeneratorConfig {
            periods: 30,
            garch: true,
            investor: InvestorSpec::Archetype {
                archetype: ArchetypeKind::EsgOriented,
            },
            ..GeneratorConfig::default()
        };
        let a = generate_observations(&mut rng(7), &cfg).unwrap();
        let b = generate_observations(&mut rng(7), &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for (t, (obs, sol)) in a.data.observations.iter().zip(&a.solutions).enumerate() {
            let prefs = a.data.preferences(t, a.truth.rho, a.truth.tau, a.truth.eta);
            assert!(validate(&obs.market, &prefs, &obs.portfolio).is_empty());
            assert!(sol.certificate.stationarity_residual <= 1e-6);
            if t > 0 {
                assert_eq!(obs.x_prev, a.data.observations[t - 1].portfolio);
            }
        }
    }

    #[test]
    fn noisy_observations_stay_on_simplex() {
        let cfg = GeneratorConfig {
            periods: 5,
            noise: 0.3,
            ..GeneratorConfig::default()
        };
        let trial = generate_observations(&mut rng(8), &cfg).unwrap();
        for (obs, sol) in trial.data.observations.iter().zip(&trial.solutions) {
            assert!((obs.portfolio.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_ne!(obs.portfolio, sol.portfolio);
        }
    }

    #[test]
    fn rho_path_length_checked() {
        let cfg = GeneratorConfig {
            periods: 3,
            investor: InvestorSpec::RhoPath {
                rho: vec![1.0, 2.0],
                tau: 0.0,
                eta: 0.0,
            },
            ..GeneratorConfig::default()
        };
        assert!(matches!(generate_observations(&mut rng(9), &cfg), Err(Error::LengthMismatch(_))));
    }
}
