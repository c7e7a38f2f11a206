//! Fixed-seed inputs shared by the benchmarks.

use invport::synthetic::{generate_observations, GeneratorConfig, InvestorSpec, ObservationSet};
use invport::{MarketParams, Portfolio, Preferences};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random well-conditioned market and preferences with `n` assets.
pub fn instance(seed: u64, n: usize) -> (MarketParams, Preferences) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.3..0.3));
    let sigma = &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.02;
    let mu = (0..n).map(|_| rng.random_range(0.0..0.15)).collect();
    let market = MarketParams::new(mu, sigma).expect("valid market");
    let prefs = Preferences {
        rho: 3.0,
        tau: 0.1,
        eta: 0.5,
        esg_scores: (0..n).map(|_| rng.random()).collect(),
        linear_cost: vec![0.002; n],
        x_prev: Portfolio::equal(n),
    };
    (market, prefs)
}

/// Noiseless observations of a fixed off-grid investor.
pub fn dataset(seed: u64, n: usize, periods: usize) -> ObservationSet {
    let cfg = GeneratorConfig {
        n,
        k: 3.min(n),
        periods,
        investor: InvestorSpec::Fixed {
            rho: 4.2,
            tau: 0.17,
            eta: 0.8,
        },
        ..GeneratorConfig::default()
    };
    generate_observations(&mut ChaCha8Rng::seed_from_u64(seed), &cfg)
        .expect("generation succeeds")
        .data
}
