use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::{stream, tags};
use crate::error::{Error, Result};
use crate::inverse::ParamGrid;
use crate::model::ShockSpec;
use crate::synthetic::{lhs_sample, ArchetypeKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub b_nonparam: usize,
    pub b_param: usize,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            b_nonparam: 200,
            b_param: 500,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Flags {
    pub garch: bool,
    /// Fill the default type list with Latin hypercube points.
    pub lhs: bool,
    /// Dirichlet mixing weight ω on observed portfolios.
    pub noise: f64,
    pub redraw_loadings: bool,
    /// Drift penalty of the per-period ρ path estimate; 0 disables it.
    pub drift_gamma: f64,
}

impl Default for Flags {
    fn default() -> Self {
        Self {
            garch: false,
            lhs: true,
            noise: 0.0,
            redraw_loadings: false,
            drift_gamma: 0.0,
        }
    }
}

/// Factor-model draw settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketSettings {
    pub sigma_f_sq: f64,
    pub var_lo: f64,
    pub var_hi: f64,
    pub mu_bar: f64,
    pub sigma_mu_sq: f64,
}

impl Default for MarketSettings {
    fn default() -> Self {
        Self {
            sigma_f_sq: 0.25,
            var_lo: 0.05,
            var_hi: 0.20,
            mu_bar: 0.05,
            sigma_mu_sq: 0.01,
        }
    }
}

/// One investor type; trial `r` uses type `r mod len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvestorType {
    pub label: String,
    pub rho: f64,
    pub tau: f64,
    pub eta: f64,
    /// How the point was produced (`conservative`, `lhs`, `explicit`, ...).
    pub source: String,
}

impl InvestorType {
    pub fn params(&self) -> [f64; 3] {
        [self.rho, self.tau, self.eta]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub k: usize,
    #[serde(alias = "T")]
    pub periods: usize,
    #[serde(alias = "R")]
    pub trials: usize,
    pub master_seed: u64,
    pub grid: ParamGrid,
    /// Explicit type list; `None` builds the default ten types.
    pub types: Option<Vec<InvestorType>>,
    pub shocks: Vec<ShockSpec>,
    pub bootstrap: BootstrapConfig,
    pub split_ratio: f64,
    pub flags: Flags,
    pub market: MarketSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 10,
            k: 3,
            periods: 100,
            trials: 100,
            master_seed: 20_240_601,
            grid: ParamGrid::default(),
            types: None,
            shocks: vec![ShockSpec::cost(0.2), ShockSpec::volatility(0.3)],
            bootstrap: BootstrapConfig::default(),
            split_ratio: 0.8,
            flags: Flags::default(),
            market: MarketSettings::default(),
        }
    }
}

pub const DEFAULT_TYPE_COUNT: usize = 10;

impl ExperimentConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n < 2 || self.k < 1 {
            return bad(format!("need n >= 2 and k >= 1, got n={} k={}", self.n, self.k));
        }
        if self.periods < 2 {
            return bad(format!("need at least 2 periods, got {}", self.periods));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split ratio {} outside (0, 1)", self.split_ratio));
        }
        let train = self.train_periods();
        if train == 0 || train >= self.periods {
            return bad(format!("split {} of {} periods leaves an empty side", self.split_ratio, self.periods));
        }
        let b = &self.bootstrap;
        if !(b.level > 0.0 && b.level < 1.0) || b.b_param < 2 || (b.b_nonparam != 0 && b.b_nonparam < 2) {
            return bad(format!("invalid bootstrap settings {b:?}"));
        }
        if !(0.0..=1.0).contains(&self.flags.noise) || !(self.flags.drift_gamma >= 0.0) {
            return bad("noise must lie in [0, 1] and drift_gamma must be >= 0".into());
        }
        if let Some(s) = self.shocks.iter().find(|s| !s.is_valid() || **s == ShockSpec::IDENTITY) {
            return bad(format!("shock {s:?} must be non-negative and non-trivial"));
        }
        if let Some(types) = &self.types {
            if types.is_empty() {
                return bad("explicit type list is empty".into());
            }
            if let Some(t) = types.iter().find(|t| !(t.rho > 0.0 && t.tau >= 0.0 && t.eta >= 0.0)) {
                return bad(format!("type {} has invalid parameters", t.label));
            }
        }
        self.grid.check().map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// `⌊split·T⌋`.
    pub fn train_periods(&self) -> usize {
        (self.split_ratio * self.periods as f64 + 1e-9).floor() as usize
    }

    /// Baseline followed by the configured shocks.
    pub fn scenarios(&self) -> Vec<ShockSpec> {
        std::iter::once(ShockSpec::IDENTITY).chain(self.shocks.iter().copied()).collect()
    }

    /// The explicit list, or three archetype draws plus seven Latin
    /// hypercube points over the grid's hull (seven more archetype draws
    /// with `lhs` off).
    pub fn investor_types(&self) -> Result<Vec<InvestorType>> {
        if let Some(types) = &self.types {
            return Ok(types.clone());
        }
        let mut rng = stream(self.master_seed, 0, tags::TYPES);
        let axes = [&self.grid.rho_values, &self.grid.tau_values, &self.grid.eta_values];
        let mut out = Vec::with_capacity(DEFAULT_TYPE_COUNT);
        let push = |p: [f64; 3], source: &str, out: &mut Vec<InvestorType>| {
            out.push(InvestorType {
                label: format!("T{}", out.len() + 1),
                rho: p[0],
                tau: p[1],
                eta: p[2],
                source: source.to_string(),
            })
        };
        let archetype_count = if self.flags.lhs { 3 } else { DEFAULT_TYPE_COUNT };
        for i in 0..archetype_count {
            let kind = ArchetypeKind::ALL[i % 3];
            let ranges = kind.ranges();
            let mut p = [0.0; 3];
            for a in 0..3 {
                let (lo, hi) = ranges[a];
                p[a] = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            }
            push(p, archetype_label(kind), &mut out);
        }
        if self.flags.lhs {
            let hull: Vec<(f64, f64)> = axes.iter().map(|v| (v[0], v[v.len() - 1])).collect();
            for point in lhs_sample(&mut rng, &hull, DEFAULT_TYPE_COUNT - 3)? {
                push([point[0], point[1], point[2]], "lhs", &mut out);
            }
        }
        Ok(out)
    }
}

fn archetype_label(kind: ArchetypeKind) -> &'static str {
    match kind {
        ArchetypeKind::Conservative => "conservative",
        ArchetypeKind::Neutral => "neutral",
        ArchetypeKind::EsgOriented => "esg_oriented",
    }
}
