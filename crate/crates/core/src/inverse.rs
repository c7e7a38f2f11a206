//! Grid-based inverse estimation of (ρ, τ, η) from observed portfolios.
//!
//! The loss of a candidate is `Σ_t w_t ‖x^t − x*(μ^t, Σ^t, θ)‖²` where the
//! inner optimum uses each period's observed previous holdings. Period
//! losses therefore do not depend on one another, and [`InverseProblem`]
//! caches them per candidate: bootstrap resamples, expanding-window online
//! estimates and the dynamic trellis all reuse the same forward solves.

use std::collections::{HashMap, HashSet};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::solve_forward_warm;
use crate::model::{Preferences, UtilitySpec, DEFAULT_RHO_MAX, PD_TOL};
use crate::synthetic::ObservationSet;

/// Losses within this distance of the minimum count as ties.
pub const TIE_TOL: f64 = 1e-14;
/// Decimal places kept on refined candidate coordinates.
const COORD_SCALE: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub rounds: usize,
    pub shrink: f64,
    /// Odd number of points per axis, centred on the incumbent.
    pub points: usize,
}

impl Default for Refinement {
    fn default() -> Self {
        Self {
            rounds: 2,
            shrink: 0.25,
            points: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamGrid {
    pub rho_values: Vec<f64>,
    pub tau_values: Vec<f64>,
    pub eta_values: Vec<f64>,
    pub refinement: Option<Refinement>,
    #[serde(default = "default_rho_max")]
    pub rho_max: f64,
}

fn default_rho_max() -> f64 {
    DEFAULT_RHO_MAX
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self {
            rho_values: vec![1.0, 2.0, 3.0, 5.0, 7.0, 10.0],
            tau_values: vec![0.0, 0.1, 0.3, 0.5],
            eta_values: vec![0.0, 0.5, 1.0, 2.0],
            refinement: Some(Refinement::default()),
            rho_max: DEFAULT_RHO_MAX,
        }
    }
}

impl ParamGrid {
    pub fn without_refinement(mut self) -> Self {
        self.refinement = None;
        self
    }

    fn axes(&self) -> [&[f64]; 3] {
        [&self.rho_values, &self.tau_values, &self.eta_values]
    }

    pub fn check(&self) -> Result<()> {
        for (name, axis) in ["rho", "tau", "eta"].iter().zip(self.axes()) {
            if axis.is_empty() {
                return Err(Error::InvalidConfig(format!("{name} grid is empty")));
            }
            if axis.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidConfig(format!("{name} grid is not strictly ascending")));
            }
            if axis.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidConfig(format!("{name} grid has negative or non-finite values")));
            }
        }
        if self.rho_values.iter().any(|&r| r > self.rho_max) {
            return Err(Error::InvalidConfig(format!("rho grid exceeds rho_max {}", self.rho_max)));
        }
        if let Some(r) = &self.refinement {
            if !(r.shrink > 0.0 && r.shrink < 1.0) || r.points % 2 == 0 {
                return Err(Error::InvalidConfig(
                    "refinement needs shrink in (0,1) and an odd point count".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn product(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.rho_values.len() * self.tau_values.len() * self.eta_values.len());
        for &r in &self.rho_values {
            for &t in &self.tau_values {
                for &e in &self.eta_values {
                    out.push([r, t, e]);
                }
            }
        }
        out
    }

    /// Larger gap to a neighbouring grid value on `axis` (0 on a one-point axis).
    fn neighbour_gap(&self, axis: usize, value: f64) -> f64 {
        let values = self.axes()[axis];
        let i = values
            .iter()
            .position(|&v| v == value)
            .unwrap_or_else(|| nearest_index(values, value));
        let below = if i > 0 { values[i] - values[i - 1] } else { 0.0 };
        let above = if i + 1 < values.len() { values[i + 1] - values[i] } else { 0.0 };
        below.max(above)
    }

    fn in_bounds(&self, p: &[f64; 3]) -> bool {
        p[0] > 0.0 && p[0] <= self.rho_max && p[1] >= 0.0 && p[2] >= 0.0
    }
}

fn nearest_index(values: &[f64], v: f64) -> usize {
    (0..values.len())
        .min_by(|&a, &b| (values[a] - v).abs().total_cmp(&(values[b] - v).abs()))
        .unwrap_or(0)
}

/// `λ_ρ|ρ| + λ_c(τ + ‖c + η·esg‖₁)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Regularization {
    pub lambda_rho: f64,
    pub lambda_c: f64,
}

impl Regularization {
    pub fn penalty(&self, params: [f64; 3], esg_scores: &[f64], linear_cost: &[f64]) -> f64 {
        let cost_l1: f64 = linear_cost
            .iter()
            .zip(esg_scores)
            .map(|(c, s)| (c + params[2] * s).abs())
            .sum();
        self.lambda_rho * params[0].abs() + self.lambda_c * (params[1].abs() + cost_l1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateLoss {
    pub params: [f64; 3],
    pub loss: f64,
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub estimate: Preferences,
    pub loss: f64,
    pub grid_evals: usize,
    /// Every successfully evaluated candidate, in evaluation order.
    pub per_candidate_losses: Option<Vec<CandidateLoss>>,
    /// Incumbent loss after the grid pass and after each refinement round.
    pub round_losses: Vec<f64>,
    /// Final search step per axis; 0 on an axis with a single value.
    pub resolution: [f64; 3],
    pub warnings: Vec<String>,
}

impl EstimationResult {
    pub fn params(&self) -> [f64; 3] {
        self.estimate.params()
    }

    /// Squared scaled MAD of near-optimal final-round candidates around the
    /// estimate, floored at `(resolution/2)²` per axis.
    pub fn local_variance(&self) -> [f64; 3] {
        let theta = self.params();
        let last_round = self.round_losses.len().saturating_sub(1);
        let threshold = 2.0 * self.loss + 1e-12;
        let near: Vec<&CandidateLoss> = self
            .per_candidate_losses
            .iter()
            .flatten()
            .filter(|c| c.round == last_round && c.loss <= threshold)
            .collect();
        let mut out = [0.0; 3];
        for a in 0..3 {
            let mut dev: Vec<f64> = near.iter().map(|c| (c.params[a] - theta[a]).abs()).collect();
            let mad = median(&mut dev).unwrap_or(0.0);
            let floor = 0.5 * self.resolution[a];
            out[a] = (1.4826 * mad).powi(2).max(floor * floor);
        }
        out
    }
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicEstimate {
    pub rho_path: Vec<f64>,
    pub tau: f64,
    pub eta: f64,
    /// Fit plus `gamma · Σ (ρ_t − ρ_{t−1})²`.
    pub loss: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identifiability {
    pub pd_ok: bool,
    pub distinct_active_sets: usize,
    /// Asset pairs (i < j, 0-based) with identical μ and Σ rows in every period.
    pub redundant_pairs: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
}

pub fn identifiability_check(data: &ObservationSet) -> Identifiability {
    let obs = &data.observations;
    let pd_ok = obs.iter().all(|o| o.market.min_eigenvalue() > PD_TOL);
    let mut sets: Vec<Vec<usize>> = obs.iter().map(|o| o.portfolio.active_set()).collect();
    sets.sort();
    sets.dedup();
    let distinct_active_sets = sets.len();

    let n = data.n_assets();
    let mut redundant_pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let same = !obs.is_empty()
                && obs.iter().all(|o| {
                    let m = &o.market;
                    (m.mu[i] - m.mu[j]).abs() <= 1e-12
                        && (0..n).all(|k| {
                            let (a, b) = (row_entry(m, i, k, i, j), row_entry(m, j, k, i, j));
                            (a - b).abs() <= 1e-12
                        })
                });
            if same {
                redundant_pairs.push((i, j));
            }
        }
    }

    let mut warnings = Vec::new();
    if !pd_ok {
        warnings.push("some period covariance is not positive definite".to_string());
    }
    if distinct_active_sets < 2 {
        warnings.push(format!(
            "only {distinct_active_sets} distinct active set(s); parameters may not be identified"
        ));
    }
    for (i, j) in &redundant_pairs {
        warnings.push(format!("assets {i} and {j} are indistinguishable in every period"));
    }
    Identifiability {
        pd_ok,
        distinct_active_sets,
        redundant_pairs,
        warnings,
    }
}

/// Σ row entry with the pair's own columns swapped for the partner row, so
/// that rows i and j of a duplicated asset compare equal.
fn row_entry(m: &crate::model::MarketParams, row: usize, col: usize, i: usize, j: usize) -> f64 {
    let col = if row == j && col == j {
        i
    } else if row == j && col == i {
        j
    } else {
        col
    };
    m.sigma[(row, col)]
}

type Key = [u64; 3];

fn key(p: &[f64; 3]) -> Key {
    [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()]
}

/// Per-period losses for one candidate over a prefix of periods; NaN marks
/// a period whose forward solve failed.
#[derive(Debug, Clone, Default)]
struct PeriodLosses {
    values: Vec<f64>,
    first_error: Option<(usize, String)>,
}

/// An observation set with a shared cache of per-period candidate losses.
pub struct InverseProblem<'a> {
    data: &'a ObservationSet,
    spec: UtilitySpec,
    cache: Mutex<HashMap<Key, PeriodLosses>>,
}

impl<'a> InverseProblem<'a> {
    /// Estimation under the linear turnover/ESG model.
    pub fn new(data: &'a ObservationSet) -> Self {
        Self::with_spec(data, UtilitySpec::TurnoverEsg)
    }

    pub fn with_spec(data: &'a ObservationSet, spec: UtilitySpec) -> Self {
        Self {
            data,
            spec,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn data(&self) -> &ObservationSet {
        self.data
    }

    pub fn periods(&self) -> usize {
        self.data.len()
    }

    fn period_loss(&self, params: &[f64; 3], t: usize) -> Result<f64> {
        let obs = &self.data.observations[t];
        let prefs = self.data.preferences(t, params[0], params[1], params[2]);
        let sol = solve_forward_warm(&obs.market, &prefs, &self.spec, &obs.portfolio)?;
        Ok(sol.portfolio.distance_sq(&obs.portfolio))
    }

    /// Make sure every candidate has losses for periods `0..upto`.
    fn ensure(&self, candidates: &[[f64; 3]], upto: usize) {
        let todo: Vec<([f64; 3], usize)> = {
            let mut queued = HashSet::new();
            let cache = self.cache.lock().expect("loss cache poisoned");
            candidates
                .iter()
                .filter_map(|p| {
                    let have = cache.get(&key(p)).map_or(0, |l| l.values.len());
                    (have < upto && queued.insert(key(p))).then_some((*p, have))
                })
                .collect()
        };
        if todo.is_empty() {
            return;
        }
        let computed: Vec<([f64; 3], usize, PeriodLosses)> = todo
            .par_iter()
            .map(|&(p, from)| {
                let mut part = PeriodLosses::default();
                for t in from..upto {
                    match self.period_loss(&p, t) {
                        Ok(v) => part.values.push(v),
                        Err(e) => {
                            part.values.push(f64::NAN);
                            part.first_error.get_or_insert((t, e.to_string()));
                        }
                    }
                }
                (p, from, part)
            })
            .collect();
        let mut cache = self.cache.lock().expect("loss cache poisoned");
        for (p, from, part) in computed {
            let entry = cache.entry(key(&p)).or_default();
            // Another thread may have extended this entry meanwhile; losses per period are deterministic.
            let have = entry.values.len();
            if entry.first_error.is_none() {
                entry.first_error = part.first_error.filter(|(t, _)| *t >= have);
            }
            entry.values.extend(part.values.into_iter().skip(have - from));
        }
    }

    /// Unregularized loss for each period `0..upto`.
    pub fn period_losses(&self, params: [f64; 3], upto: usize) -> Result<Vec<f64>> {
        let upto = upto.min(self.periods());
        self.ensure(&[params], upto);
        let cache = self.cache.lock().expect("loss cache poisoned");
        let entry = &cache[&key(&params)];
        if let Some(t) = entry.values[..upto].iter().position(|v| v.is_nan()) {
            // Recompute for the typed error.
            drop(cache);
            return Err(self.period_loss(&params, t).err().unwrap_or(Error::AllCandidatesFailed).in_period(t));
        }
        Ok(entry.values[..upto].to_vec())
    }

    /// Weighted losses of `candidates`; `None` where a weighted period failed.
    fn weighted_losses(&self, candidates: &[[f64; 3]], weights: &[f64], reg: Option<&Regularization>) -> Vec<Option<f64>> {
        let upto = weights.iter().rposition(|&w| w != 0.0).map_or(0, |i| i + 1);
        self.ensure(candidates, upto);
        let cache = self.cache.lock().expect("loss cache poisoned");
        candidates
            .iter()
            .map(|p| {
                let values = cache.get(&key(p)).map_or(&[][..], |l| &l.values[..]);
                let mut total = 0.0;
                for (t, &w) in weights[..upto].iter().enumerate() {
                    if w != 0.0 {
                        let v = values[t];
                        if v.is_nan() {
                            return None;
                        }
                        total += w * v;
                    }
                }
                let penalty = reg.map_or(0.0, |r| r.penalty(*p, &self.data.esg_scores, &self.data.linear_cost));
                Some(total + penalty)
            })
            .collect()
    }

    /// Grid search with optional refinement, weighting period t by `weights[t]`.
    pub fn estimate(&self, grid: &ParamGrid, reg: Option<&Regularization>, weights: &[f64]) -> Result<EstimationResult> {
        grid.check()?;
        if weights.len() != self.periods() {
            return Err(Error::LengthMismatch(format!(
                "{} weights for {} periods",
                weights.len(),
                self.periods()
            )));
        }
        let mut evaluated: Vec<CandidateLoss> = Vec::new();
        let mut seen: HashMap<Key, ()> = HashMap::new();

        let grid_points = grid.product();
        let losses = self.weighted_losses(&grid_points, weights, reg);
        let mut incumbent = best_of(&grid_points, &losses).ok_or(Error::AllCandidatesFailed)?;
        record(&mut evaluated, &mut seen, &grid_points, &losses, 0);
        let mut round_losses = vec![incumbent.1];

        let base = [
            grid.neighbour_gap(0, incumbent.0[0]),
            grid.neighbour_gap(1, incumbent.0[1]),
            grid.neighbour_gap(2, incumbent.0[2]),
        ];
        let mut resolution = base;
        if let Some(refine) = &grid.refinement {
            let half = (refine.points / 2) as i64;
            for round in 1..=refine.rounds {
                let factor = refine.shrink.powi(round as i32);
                let step = [base[0] * factor, base[1] * factor, base[2] * factor];
                resolution = step;
                let candidates = local_grid(&incumbent.0, &step, half, grid);
                let losses = self.weighted_losses(&candidates, weights, reg);
                record(&mut evaluated, &mut seen, &candidates, &losses, round);
                // Tie-breaking may pick a point up to TIE_TOL worse; rounds never lose ground.
                if let Some(best) = best_of(&candidates, &losses).filter(|b| b.1 <= incumbent.1) {
                    incumbent = best;
                }
                round_losses.push(incumbent.1);
            }
        }

        let [rho, tau, eta] = incumbent.0;
        let mut estimate = self.data.preferences(0, rho, tau, eta);
        if let Some(last) = self.data.observations.last() {
            estimate.x_prev = last.portfolio.clone();
        }
        Ok(EstimationResult {
            estimate,
            loss: incumbent.1,
            grid_evals: seen.len(),
            per_candidate_losses: Some(evaluated),
            round_losses,
            resolution,
            warnings: Vec::new(),
        })
    }

    /// Per-period ρ path for fixed or searched (τ, η); see [`estimate_dynamic`].
    pub fn estimate_dynamic(
        &self,
        grid: &ParamGrid,
        gamma: f64,
        shared_tau_eta: Option<(f64, f64)>,
    ) -> Result<DynamicEstimate> {
        if !(gamma >= 0.0) {
            return Err(Error::InvalidRange(format!("drift penalty {gamma} < 0")));
        }
        grid.check()?;
        let periods = self.periods();
        if periods == 0 {
            return Err(Error::EmptyInput("observations"));
        }
        let outer: Vec<(f64, f64)> = match shared_tau_eta {
            Some(te) => vec![te],
            None => grid
                .tau_values
                .iter()
                .flat_map(|&t| grid.eta_values.iter().map(move |&e| (t, e)))
                .collect(),
        };
        let rhos = &grid.rho_values;
        let all: Vec<[f64; 3]> = outer
            .iter()
            .flat_map(|&(t, e)| rhos.iter().map(move |&r| [r, t, e]))
            .collect();
        self.ensure(&all, periods);

        let cache = self.cache.lock().expect("loss cache poisoned");
        let mut best: Option<DynamicEstimate> = None;
        for &(tau, eta) in &outer {
            let costs: Vec<&[f64]> = rhos.iter().map(|&r| &cache[&key(&[r, tau, eta])].values[..]).collect();
            let Some((path, loss)) = viterbi(rhos, &costs, periods, gamma) else {
                continue;
            };
            if best.as_ref().is_none_or(|b| loss < b.loss - TIE_TOL) {
                best = Some(DynamicEstimate {
                    rho_path: path,
                    tau,
                    eta,
                    loss,
                    gamma,
                });
            }
        }
        best.ok_or(Error::AllCandidatesFailed)
    }
}

fn record(out: &mut Vec<CandidateLoss>, seen: &mut HashMap<Key, ()>, points: &[[f64; 3]], losses: &[Option<f64>], round: usize) {
    for (p, l) in points.iter().zip(losses) {
        seen.insert(key(p), ());
        if let Some(loss) = l {
            out.push(CandidateLoss {
                params: *p,
                loss: *loss,
                round,
            });
        }
    }
}

/// Minimum loss; ties within `TIE_TOL` go to the smallest (ρ, τ, η).
fn best_of(points: &[[f64; 3]], losses: &[Option<f64>]) -> Option<([f64; 3], f64)> {
    let min = losses.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    points
        .iter()
        .zip(losses)
        .filter_map(|(p, l)| l.filter(|&v| v <= min + TIE_TOL).map(|v| (*p, v)))
        .min_by(|a, b| lex_cmp(&a.0, &b.0))
}

fn lex_cmp(a: &[f64; 3], b: &[f64; 3]) -> std::cmp::Ordering {
    a[0].total_cmp(&b[0])
        .then(a[1].total_cmp(&b[1]))
        .then(a[2].total_cmp(&b[2]))
}

fn snap(v: f64) -> f64 {
    let s = (v * COORD_SCALE).round() / COORD_SCALE;
    if s == 0.0 {
        0.0
    } else {
        s
    }
}

fn local_grid(center: &[f64; 3], step: &[f64; 3], half: i64, grid: &ParamGrid) -> Vec<[f64; 3]> {
    let axis = |a: usize| -> Vec<f64> {
        if step[a] == 0.0 {
            vec![center[a]]
        } else {
            (-half..=half).map(|k| snap(center[a] + k as f64 * step[a])).collect()
        }
    };
    let (r, t, e) = (axis(0), axis(1), axis(2));
    let mut out = Vec::with_capacity(r.len() * t.len() * e.len());
    for &rv in &r {
        for &tv in &t {
            for &ev in &e {
                let p = [rv, tv, ev];
                if grid.in_bounds(&p) {
                    out.push(p);
                }
            }
        }
    }
    out
}

/// Min-sum path over the `periods × levels` trellis with quadratic
/// transition cost; ties go to the lower level. `None` if no finite path.
fn viterbi(levels: &[f64], costs: &[&[f64]], periods: usize, gamma: f64) -> Option<(Vec<f64>, f64)> {
    let m = levels.len();
    let mut value: Vec<f64> = (0..m).map(|j| finite_or_inf(costs[j][0])).collect();
    let mut back = vec![vec![0usize; m]; periods];
    for t in 1..periods {
        let mut next = vec![f64::INFINITY; m];
        for j in 0..m {
            let (mut arg, mut best) = (0, f64::INFINITY);
            for i in 0..m {
                let d = levels[j] - levels[i];
                let v = value[i] + gamma * d * d;
                if v < best {
                    best = v;
                    arg = i;
                }
            }
            back[t][j] = arg;
            next[j] = best + finite_or_inf(costs[j][t]);
        }
        value = next;
    }
    let (mut j, total) = value
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (j, &v)| if v < acc.1 { (j, v) } else { acc });
    if !total.is_finite() {
        return None;
    }
    let mut path = vec![0.0; periods];
    for t in (0..periods).rev() {
        path[t] = levels[j];
        j = back[t][j];
    }
    Some((path, total))
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Σ_t ‖x^t − x*(θ)‖² (+ penalty) for the candidate's ρ, τ, η and cost vectors.
pub fn inverse_loss(data: &ObservationSet, candidate: &Preferences, reg: Option<&Regularization>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput("observations"));
    }
    let mut total = 0.0;
    for (t, obs) in data.observations.iter().enumerate() {
        let prefs = candidate.with_x_prev(obs.x_prev.clone());
        let sol = solve_forward_warm(&obs.market, &prefs, &UtilitySpec::TurnoverEsg, &obs.portfolio)
            .map_err(|e| e.in_period(t))?;
        total += sol.portfolio.distance_sq(&obs.portfolio);
    }
    let penalty = reg.map_or(0.0, |r| {
        r.penalty(candidate.params(), &candidate.esg_scores, &candidate.linear_cost)
    });
    Ok(total + penalty)
}

/// Static estimate over all periods, with identifiability diagnostics attached.
pub fn estimate_static(data: &ObservationSet, grid: &ParamGrid, reg: Option<&Regularization>) -> Result<EstimationResult> {
    if data.is_empty() {
        return Err(Error::EmptyInput("observations"));
    }
    let problem = InverseProblem::new(data);
    let mut result = problem.estimate(grid, reg, &vec![1.0; data.len()])?;
    result.warnings = identifiability_check(data).warnings;
    Ok(result)
}

/// Time-varying ρ_t on `grid.rho_values` minimizing fit plus
/// `gamma · Σ (ρ_t − ρ_{t−1})²`; (τ, η) fixed or searched on the grid.
pub fn estimate_dynamic(
    data: &ObservationSet,
    grid: &ParamGrid,
    gamma: f64,
    shared_tau_eta: Option<(f64, f64)>,
) -> Result<DynamicEstimate> {
    InverseProblem::new(data).estimate_dynamic(grid, gamma, shared_tau_eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MarketParams, Portfolio};
    use crate::synthetic::{generate_observations, GeneratorConfig, InvestorSpec, Observation};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dataset(seed: u64, periods: usize, rho: f64, tau: f64, eta: f64) -> ObservationSet {
        let cfg = GeneratorConfig {
            n: 5,
            periods,
            investor: InvestorSpec::Fixed { rho, tau, eta },
            ..GeneratorConfig::default()
        };
        generate_observations(&mut ChaCha8Rng::seed_from_u64(seed), &cfg).unwrap().data
    }

    #[test]
    fn loss_vanishes_at_truth_and_penalty_is_additive() {
        let data = dataset(1, 15, 3.0, 0.1, 0.5);
        let truth = data.preferences(0, 3.0, 0.1, 0.5);
        assert!(inverse_loss(&data, &truth, None).unwrap() < 1e-10);
        let other = data.preferences(0, 5.0, 0.1, 0.5);
        let base = inverse_loss(&data, &other, None).unwrap();
        let reg = Regularization {
            lambda_rho: 1.0,
            lambda_c: 0.0,
        };
        let with = inverse_loss(&data, &other, Some(&reg)).unwrap();
        assert!((with - base - 5.0).abs() < 1e-12);
    }

    #[test]
    fn grid_point_recovered_exactly() {
        let data = dataset(2, 30, 5.0, 0.1, 1.0);
        let r = estimate_static(&data, &ParamGrid::default(), None).unwrap();
        assert_eq!(r.params(), [5.0, 0.1, 1.0]);
        assert!(r.loss < 1e-10);
        assert!(r.round_losses.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn shared_cache_matches_fresh_problems_under_concurrency() {
        let data = dataset(4, 24, 4.2, 0.17, 0.8);
        let masks: Vec<Vec<f64>> = (0..32)
            .map(|i| (0..24).map(|t| if t < 6 + (i * 7) % 18 { 1.0 + ((i + t) % 3) as f64 } else { 0.0 }).collect())
            .collect();
        let shared = InverseProblem::new(&data);
        let grid = ParamGrid::default();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let concurrent: Vec<[f64; 3]> = pool.install(|| {
            masks
                .par_iter()
                .map(|w| shared.estimate(&grid, None, w).unwrap().params())
                .collect()
        });
        for (w, got) in masks.iter().zip(concurrent) {
            assert_eq!(InverseProblem::new(&data).estimate(&grid, None, w).unwrap().params(), got);
        }
        let cache = shared.cache.lock().unwrap();
        assert!(cache.values().all(|l| l.values.len() <= 24));
    }

    #[test]
    fn ties_go_to_smallest_candidate() {
        let pts = [[2.0, 0.0, 0.0], [1.0, 0.5, 0.0], [1.0, 0.1, 0.0]];
        let best = best_of(&pts, &[Some(0.0), Some(0.0), Some(0.0)]).unwrap();
        assert_eq!(best.0, [1.0, 0.1, 0.0]);
        assert!(best_of(&pts, &[None, None, None]).is_none());
    }

    #[test]
    fn refinement_tiles_between_grid_points() {
        let grid = ParamGrid::default();
        let pts = local_grid(&[3.0, 0.1, 0.5], &[0.5, 0.05, 0.25], 2, &grid);
        assert_eq!(pts.len(), 125);
        let pts = local_grid(&[1.0, 0.0, 0.0], &[0.5, 0.05, 0.25], 2, &grid);
        // ρ ≤ 0, τ < 0, η < 0 dropped.
        assert_eq!(pts.len(), 4 * 3 * 3);
    }

    #[test]
    fn interior_two_asset_loss_matches_closed_form() {
        let sigma = DMatrix::from_row_slice(2, 2, &[0.2, 0.05, 0.05, 0.3]);
        let markets: Vec<MarketParams> = [[0.10, 0.08], [0.12, 0.07], [0.09, 0.11]]
            .iter()
            .map(|mu| MarketParams::new(mu.to_vec(), sigma.clone()).unwrap())
            .collect();
        let observations: Vec<Observation> = markets
            .iter()
            .map(|m| Observation {
                market: m.clone(),
                x_prev: Portfolio::equal(2),
                portfolio: crate::forward::interior_solution(m, 2.0, &[0.0, 0.0]).unwrap(),
            })
            .collect();
        let data = ObservationSet {
            observations,
            esg_scores: vec![0.0; 2],
            linear_cost: vec![0.0; 2],
        };
        let cand = data.preferences(0, 3.0, 0.0, 0.0);
        let expected: f64 = data
            .observations
            .iter()
            .map(|o| {
                let x = crate::forward::interior_solution(&o.market, 3.0, &[0.0, 0.0]).unwrap();
                x.distance_sq(&o.portfolio)
            })
            .sum();
        let got = inverse_loss(&data, &cand, None).unwrap();
        assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
    }

    #[test]
    fn dynamic_limits() {
        let path: Vec<f64> = (0..12).map(|t| if t < 6 { 2.0 } else { 7.0 }).collect();
        let cfg = GeneratorConfig {
            n: 5,
            periods: 12,
            investor: InvestorSpec::RhoPath {
                rho: path.clone(),
                tau: 0.0,
                eta: 0.0,
            },
            ..GeneratorConfig::default()
        };
        let data = generate_observations(&mut ChaCha8Rng::seed_from_u64(3), &cfg).unwrap().data;
        let grid = ParamGrid::default().without_refinement();
        let free = estimate_dynamic(&data, &grid, 0.0, Some((0.0, 0.0))).unwrap();
        assert_eq!(free.rho_path, path);
        let stiff = estimate_dynamic(&data, &grid, 1e9, Some((0.0, 0.0))).unwrap();
        assert!(stiff.rho_path.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn viterbi_matches_enumeration() {
        let levels = [1.0, 2.0, 3.0];
        let c: [[f64; 4]; 3] = [[0.0, 0.1, 0.9, 0.8], [0.3, 0.2, 0.4, 0.5], [0.9, 0.7, 0.0, 0.05]];
        let costs: Vec<&[f64]> = c.iter().map(|r| &r[..]).collect();
        for gamma in [0.0, 0.05, 0.3, 2.0] {
            let (path, loss) = viterbi(&levels, &costs, 4, gamma).unwrap();
            let mut best = f64::INFINITY;
            for code in 0..81 {
                let idx = [code % 3, (code / 3) % 3, (code / 9) % 3, code / 27];
                let mut v = 0.0;
                for t in 0..4 {
                    v += c[idx[t]][t];
                    if t > 0 {
                        let d = levels[idx[t]] - levels[idx[t - 1]];
                        v += gamma * d * d;
                    }
                }
                best = best.min(v);
            }
            assert!((loss - best).abs() < 1e-12);
            assert_eq!(path.len(), 4);
        }
    }

    #[test]
    fn duplicated_asset_and_interior_only_flags() {
        let sigma = DMatrix::from_row_slice(3, 3, &[0.2, 0.05, 0.01, 0.05, 0.2, 0.01, 0.01, 0.01, 0.3]);
        let m = MarketParams::new(vec![0.1, 0.1, 0.08], sigma).unwrap();
        let data = ObservationSet {
            observations: vec![Observation {
                market: m,
                x_prev: Portfolio::equal(3),
                portfolio: Portfolio::new(vec![0.4, 0.4, 0.2]),
            }],
            esg_scores: vec![0.0; 3],
            linear_cost: vec![0.0; 3],
        };
        let d = identifiability_check(&data);
        assert_eq!(d.redundant_pairs, vec![(0, 1)]);
        assert_eq!(d.distinct_active_sets, 1);
        assert!(d.pd_ok);
        assert!(d.warnings.iter().any(|w| w.contains("distinct active set")));
    }
}
