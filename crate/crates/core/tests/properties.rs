mod common;

use std::collections::HashSet;
use std::path::Path;

use invport::ingest::{block_analysis, load_prices_csv, log_returns, BlockConfig};
use invport::inverse::{estimate_static, ParamGrid};
use invport::regret::{decision_regret, relative_welfare_loss};
use invport::stats::paired_tests;
use invport::synthetic::{generate_observations, ArchetypeKind, GeneratorConfig, InvestorSpec};
use invport::{
    interior_solution, solve_forward, solve_forward_warm, utility, validate, MarketParams, Preferences, ShockSpec,
    UtilitySpec,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn specs(rng: &mut ChaCha8Rng, n: usize) -> Vec<UtilitySpec> {
    vec![
        UtilitySpec::LinearCost,
        UtilitySpec::TurnoverEsg,
        UtilitySpec::NonlinearPower {
            kappa: (0..n).map(|_| rng.random_range(0.0..0.3)).collect(),
            p: rng.random_range(1.1..2.5),
        },
        UtilitySpec::Robust {
            delta_mu: rng.random_range(0.0..0.05),
            delta_sigma: rng.random_range(0.0..0.5),
        },
    ]
}

fn two_asset_interior(rng: &mut ChaCha8Rng) -> (MarketParams, Preferences) {
    let market = loop {
        let m = common::random_market(rng, 2);
        let m = MarketParams::new(m.mu.iter().map(|v| 0.05 + 0.05 * v).collect(), m.sigma).unwrap();
        if interior_solution(&m, 5.0, &[0.0, 0.0]).is_ok() {
            break m;
        }
    };
    let mut prefs = common::random_prefs(rng, 2);
    prefs.rho = 5.0;
    prefs.eta = 0.0;
    prefs.linear_cost = vec![0.0; 2];
    (market, prefs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solver_output_validates_and_is_idempotent(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let market = common::random_market(&mut rng, n);
        let prefs = common::random_prefs(&mut rng, n);
        for spec in specs(&mut rng, n) {
            let sol = solve_forward(&market, &prefs, &spec).unwrap();
            prop_assert!(validate(&market, &prefs, &sol.portfolio).is_empty());
            prop_assert!(sol.certificate.is_certified());
            let again = solve_forward_warm(&market, &prefs, &spec, &sol.portfolio).unwrap();
            let moved = sol.portfolio.weights.iter().zip(&again.portfolio.weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(moved < 1e-8, "{spec:?} moved {moved}");
        }
    }

    #[test]
    fn interior_optimum_is_scale_invariant(seed in any::<u64>(), s in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..6);
        let market = common::random_market(&mut rng, n);
        let rho = rng.random_range(1.0..10.0);
        let zero = vec![0.0; n];
        if let Ok(x) = interior_solution(&market, rho, &zero) {
            let scaled = MarketParams::new(market.mu.iter().map(|m| s * m).collect(), market.sigma.clone()).unwrap();
            let y = interior_solution(&scaled, s * rho, &zero).unwrap();
            for (a, b) in x.weights.iter().zip(&y.weights) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn robust_objective_nonincreasing_in_radii(seed in any::<u64>(), d1 in 0.0f64..0.1, d2 in 0.0f64..0.1, s1 in 0.0f64..1.0, s2 in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..6);
        let market = common::random_market(&mut rng, n);
        let prefs = common::random_prefs(&mut rng, n);
        let x = invport::Portfolio::new(common::random_simplex(&mut rng, n));
        let f = |dm: f64, ds: f64| utility(&market, &prefs, &UtilitySpec::Robust { delta_mu: dm, delta_sigma: ds }, &x);
        let (lo_m, hi_m) = (d1.min(d2), d1.max(d2));
        let (lo_s, hi_s) = (s1.min(s2), s1.max(s2));
        prop_assert!(f(hi_m, lo_s) <= f(lo_m, lo_s) + 1e-15);
        prop_assert!(f(lo_m, hi_s) <= f(lo_m, lo_s) + 1e-15);
    }

    #[test]
    fn acting_on_wrong_preferences_never_beats_truth(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let market = common::random_market(&mut rng, n);
        let truth = common::random_prefs(&mut rng, n);
        let est = truth.with_params(rng.random_range(0.5..10.0), rng.random_range(0.0..0.5), rng.random_range(0.0..2.0));
        let decision = solve_forward(&market, &est, &UtilitySpec::TurnoverEsg).unwrap().portfolio;
        prop_assert!(decision_regret(&market, &truth, &decision).unwrap() >= -1e-9);
    }

    #[test]
    fn welfare_loss_monotone_in_shock_size(seed in any::<u64>(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (market, prefs) = two_asset_interior(&mut rng);
        let markets = [market];
        let (lo, hi) = (a.min(b), a.max(b));
        let loss = |s: ShockSpec| relative_welfare_loss(&prefs, &markets, &s).unwrap();
        let identity = |s: f64, f: fn(f64) -> ShockSpec| if s == 0.0 { ShockSpec::IDENTITY } else { f(s) };
        prop_assert!(loss(identity(lo, ShockSpec::cost)) <= loss(identity(hi, ShockSpec::cost)) + 1e-12);
        prop_assert!(loss(identity(lo, ShockSpec::volatility)) <= loss(identity(hi, ShockSpec::volatility)) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generated_markets_psd_and_truth_in_archetype_box(seed in any::<u64>(), kind in 0usize..3) {
        let archetype = ArchetypeKind::ALL[kind];
        let cfg = GeneratorConfig { n: 5, k: 2, periods: 8, investor: InvestorSpec::Archetype { archetype }, ..GeneratorConfig::default() };
        let trial = generate_observations(&mut ChaCha8Rng::seed_from_u64(seed), &cfg).unwrap();
        for o in &trial.data.observations {
            prop_assert!(o.market.min_eigenvalue() >= -1e-12);
        }
        for (v, (lo, hi)) in trial.truth.params().iter().zip(archetype.ranges()) {
            prop_assert!(lo <= *v && *v <= hi);
        }
    }

    #[test]
    fn refinement_rounds_never_increase_loss(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let investor = InvestorSpec::Fixed { rho: rng.random_range(1.0..10.0), tau: rng.random_range(0.0..0.5), eta: rng.random_range(0.0..2.0) };
        let cfg = GeneratorConfig { n: 4, k: 2, periods: 10, investor, ..GeneratorConfig::default() };
        let trial = generate_observations(&mut rng, &cfg).unwrap();
        let est = estimate_static(&trial.data, &ParamGrid::default(), None).unwrap();
        prop_assert!(est.loss >= 0.0);
        prop_assert!(est.round_losses.windows(2).all(|w| w[1] <= w[0]), "{:?}", est.round_losses);
    }
}

#[test]
fn refinement_keeps_incumbent_over_worse_tie() {
    let mut rng = ChaCha8Rng::seed_from_u64(1260668483029045604);
    let investor = InvestorSpec::Fixed { rho: rng.random_range(1.0..10.0), tau: rng.random_range(0.0..0.5), eta: rng.random_range(0.0..2.0) };
    let cfg = GeneratorConfig { n: 4, k: 2, periods: 10, investor, ..GeneratorConfig::default() };
    let trial = generate_observations(&mut rng, &cfg).unwrap();
    let est = estimate_static(&trial.data, &ParamGrid::default(), None).unwrap();
    assert!(est.round_losses.windows(2).all(|w| w[1] <= w[0]), "{:?}", est.round_losses);
}

#[test]
fn distinct_seeds_give_distinct_datasets() {
    let cfg = GeneratorConfig {
        n: 4,
        k: 2,
        periods: 5,
        ..GeneratorConfig::default()
    };
    let hashes: HashSet<String> = (0..10u64)
        .map(|s| {
            let trial = generate_observations(&mut ChaCha8Rng::seed_from_u64(s), &cfg).unwrap();
            serde_json::to_string(&trial.data).unwrap()
        })
        .collect();
    assert_eq!(hashes.len(), 10);
}

#[test]
fn t_and_wilcoxon_agree_on_separated_samples() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = (0..30).map(|_| StandardNormal.sample(&mut rng)).collect();
        let a: Vec<f64> = b
            .iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + 1.0 + 0.5 * z
            })
            .collect();
        let t = paired_tests(&a, &b, 1).unwrap();
        assert!(t.t_stat > 0.0);
        assert_eq!(t.t_p < 0.05, t.wilcoxon_p < 0.05, "seed {seed}: {t:?}");
    }
}

#[test]
fn blocks_partition_the_return_rows() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/two_asset_regimes.csv");
    let loaded = load_prices_csv(&path).unwrap();
    let returns = log_returns(&loaded.series).unwrap();
    let dates = &loaded.series.dates[1..];
    let cfg = BlockConfig::default();
    let blocks = block_analysis(&returns, dates, &cfg).unwrap();
    let covered = dates.iter().filter(|d| cfg.blocks.block_of(**d).is_some()).count();
    assert_eq!(covered, returns.nrows());
    assert_eq!(blocks.iter().map(|b| b.rows).sum::<usize>(), returns.nrows());
}
