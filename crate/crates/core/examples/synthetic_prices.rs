//! Writes a two-asset daily price file with one volatility/drift regime per
//! three-year block, 2007 through 2024.
//!
//! Usage: `cargo run --example synthetic_prices -- <out.csv>`

use std::io::Write;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// (annual drift, annual vol) for the equity-like and bond-like asset.
const REGIMES: [[(f64, f64); 2]; 6] = [
    [(-0.15, 0.40), (0.05, 0.08)],
    [(0.10, 0.18), (0.03, 0.05)],
    [(0.08, 0.12), (0.02, 0.04)],
    [(0.14, 0.28), (0.01, 0.07)],
    [(-0.05, 0.22), (-0.06, 0.10)],
    [(0.12, 0.16), (0.04, 0.06)],
];
const CORRELATION: [f64; 6] = [-0.3, -0.2, 0.0, -0.1, 0.5, 0.1];

fn main() -> std::io::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "two_asset_regimes.csv".into());
    let mut rng = ChaCha8Rng::seed_from_u64(2007);
    let mut file = std::io::BufWriter::new(std::fs::File::create(&out)?);
    writeln!(file, "date,EQTY,BOND")?;
    let mut prices = [100.0_f64, 100.0];
    let mut day = NaiveDate::from_ymd_opt(2007, 1, 2).unwrap();
    let end = NaiveDate::from_ymd_opt(2025, 1, 1).unwrap();
    let dt = 1.0 / 252.0;
    while day < end {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            let b = ((day.year() - 2007) / 3) as usize;
            let (z1, z2): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            let c = CORRELATION[b];
            let shocks = [z1, c * z1 + (1.0 - c * c).sqrt() * z2];
            for j in 0..2 {
                let (m, s) = REGIMES[b][j];
                prices[j] *= ((m - 0.5 * s * s) * dt + s * dt.sqrt() * shocks[j]).exp();
            }
            writeln!(file, "{},{:.6},{:.6}", day.format("%Y-%m-%d"), prices[0], prices[1])?;
        }
        day = day.succ_opt().unwrap();
    }
    file.flush()
}
