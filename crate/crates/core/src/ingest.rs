//! Price CSV ingestion and the calendar-block utility analysis.
//!
//! Daily moments are annualized exactly once, by converting a [`Daily`]
//! value into an [`Annualized`] one; block utilities only accept the latter.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, quad_form};
use crate::model::ShockSpec;

pub const TRADING_DAYS: f64 = 252.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub dates: Vec<NaiveDate>,
    /// T×n positive prices.
    pub prices: DMatrix<f64>,
    pub tickers: Vec<String>,
}

impl PriceSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPrices {
    pub series: PriceSeries,
    /// Rows skipped because at least one price was missing.
    pub dropped_rows: usize,
}

pub fn load_prices_csv(path: &Path) -> Result<LoadedPrices> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_prices(&text, path)
}

/// Parse `date,<ticker>,...` rows with ISO dates; `path` labels errors.
pub fn parse_prices(text: &str, path: &Path) -> Result<LoadedPrices> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("date") {
        return Err(parse_err(1, "header must be `date,<ticker>,...`".into()));
    }
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let n = tickers.len();

    let mut dates = Vec::new();
    let mut flat = Vec::new();
    let mut dropped_rows = 0;
    let mut last_date: Option<NaiveDate> = None;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != n + 1 {
            return Err(parse_err(line, format!("expected {} fields, found {}", n + 1, record.len())));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| parse_err(line, format!("bad date `{}`: {e}", &record[0])))?;
        if last_date.is_some_and(|d| date <= d) {
            return Err(Error::UnsortedDates { line });
        }
        last_date = Some(date);
        let mut row = Vec::with_capacity(n);
        let mut missing = false;
        for (j, cell) in record.iter().skip(1).enumerate() {
            if cell.is_empty() {
                missing = true;
                continue;
            }
            let price: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("bad price `{cell}` for {}", tickers[j])))?;
            if !(price > 0.0) || !price.is_finite() {
                return Err(Error::NonPositivePrice {
                    ticker: tickers[j].clone(),
                    line,
                    price,
                });
            }
            row.push(price);
        }
        if missing {
            dropped_rows += 1;
            continue;
        }
        dates.push(date);
        flat.extend(row);
    }
    let prices = DMatrix::from_row_slice(dates.len(), n, &flat);
    Ok(LoadedPrices {
        series: PriceSeries { dates, prices, tickers },
        dropped_rows,
    })
}

/// `ln(p_t / p_{t−1})` per column; (T−1)×n.
pub fn log_returns(series: &PriceSeries) -> Result<DMatrix<f64>> {
    let t = series.prices.nrows();
    if t < 2 {
        return Err(Error::EmptyInput("need at least two price rows for returns"));
    }
    let p = &series.prices;
    Ok(DMatrix::from_fn(t - 1, p.ncols(), |i, j| (p[(i + 1, j)] / p[(i, j)]).ln()))
}

/// Daily-frequency moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Daily<T>(pub T);

/// Annualized moments; only obtainable from [`Daily`].
#[derive(Debug, Clone, PartialEq)]
pub struct Annualized<T>(T);

impl<T> Annualized<T> {
    pub fn get(&self) -> &T {
        &self.0
    }
}

impl Annualized<Moments> {
    /// Same means, covariance multiplied by `factor`.
    pub fn with_cov_scaled(&self, factor: f64) -> Self {
        Annualized(Moments {
            mean: self.0.mean.clone(),
            cov: &self.0.cov * factor,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
}

impl Daily<Moments> {
    pub fn annualize(self, factor: f64) -> Annualized<Moments> {
        Annualized(Moments {
            mean: self.0.mean.iter().map(|m| m * factor).collect(),
            cov: self.0.cov * factor,
        })
    }
}

/// Sample mean and covariance (divisor rows−1) of `rows` of `returns`.
fn moments(returns: &DMatrix<f64>, rows: std::ops::Range<usize>) -> Daily<Moments> {
    let n = returns.ncols();
    let w = rows.len() as f64;
    let mean: Vec<f64> = (0..n).map(|j| rows.clone().map(|i| returns[(i, j)]).sum::<f64>() / w).collect();
    let mut cov = DMatrix::zeros(n, n);
    if rows.len() > 1 {
        for a in 0..n {
            for b in a..n {
                let s: f64 = rows
                    .clone()
                    .map(|i| (returns[(i, a)] - mean[a]) * (returns[(i, b)] - mean[b]))
                    .sum::<f64>()
                    / (w - 1.0);
                cov[(a, b)] = s;
                cov[(b, a)] = s;
            }
        }
    }
    Daily(Moments { mean, cov })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingEstimate {
    /// Index of the last return row in the window.
    pub end: usize,
    pub moments: Daily<Moments>,
}

/// Trailing-window moments ending at every row from `window − 1` on.
pub fn rolling_estimates(returns: &DMatrix<f64>, window: usize) -> Result<Vec<RollingEstimate>> {
    let t = returns.nrows();
    if window < 2 {
        return Err(Error::InvalidRange(format!("rolling window {window} < 2")));
    }
    if window > t {
        return Err(Error::WindowTooLarge { window, available: t });
    }
    Ok(((window - 1)..t)
        .map(|end| RollingEstimate {
            end,
            moments: moments(returns, (end + 1 - window)..(end + 1)),
        })
        .collect())
}

/// Consecutive calendar blocks of `years` years starting on January 1st.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockSpec {
    pub start_year: i32,
    pub years: u32,
    pub count: usize,
}

impl Default for BlockSpec {
    fn default() -> Self {
        Self {
            start_year: 2007,
            years: 3,
            count: 6,
        }
    }
}

impl BlockSpec {
    fn bounds(&self, b: usize) -> (NaiveDate, NaiveDate) {
        let y0 = self.start_year + (b as i32) * self.years as i32;
        let start = NaiveDate::from_ymd_opt(y0, 1, 1).expect("valid year");
        let end = NaiveDate::from_ymd_opt(y0 + self.years as i32, 1, 1).expect("valid year");
        (start, end)
    }

    pub fn label(&self, b: usize) -> String {
        let (start, end) = self.bounds(b);
        format!("{}-{}", start.year(), end.year() - 1)
    }

    /// Block index of `date`, if any.
    pub fn block_of(&self, date: NaiveDate) -> Option<usize> {
        (0..self.count).find(|&b| {
            let (s, e) = self.bounds(b);
            s <= date && date < e
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub date: NaiveDate,
    pub asset_mean: Vec<f64>,
    pub asset_vol: Vec<f64>,
    pub portfolio_mean: f64,
    pub portfolio_vol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockResult {
    pub label: String,
    pub rows: usize,
    pub baseline_utility: f64,
    /// One utility per requested shock, same order.
    pub shocked_utilities: Vec<f64>,
    pub risk_return_cloud: Vec<CloudPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockConfig {
    pub blocks: BlockSpec,
    pub rho: f64,
    /// Per-unit cost applied to |x_j| for every asset.
    pub base_cost: f64,
    pub shocks: Vec<ShockSpec>,
    pub window: usize,
    pub annualization: f64,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self {
            blocks: BlockSpec::default(),
            rho: 3.0,
            base_cost: 0.002,
            shocks: vec![ShockSpec::cost(1.0), ShockSpec::volatility(0.5)],
            window: 252,
            annualization: TRADING_DAYS,
        }
    }
}

/// `μᵀx − (ρ/2)xᵀΣx − cᵀ|x|` on annualized moments.
pub fn block_utility(m: &Annualized<Moments>, x: &[f64], rho: f64, cost: &[f64]) -> f64 {
    let m = m.get();
    let c: f64 = cost.iter().zip(x).map(|(c, xi)| c * xi.abs()).sum();
    dot(&m.mean, x) - 0.5 * rho * quad_form(&m.cov, x) - c
}

/// Equal-weight utility per block at baseline and under each shock, plus
/// the rolling risk-return cloud of the window estimates ending in the block.
/// `dates[i]` is the date of return row `i`.
pub fn block_analysis(returns: &DMatrix<f64>, dates: &[NaiveDate], cfg: &BlockConfig) -> Result<Vec<BlockResult>> {
    if dates.len() != returns.nrows() {
        return Err(Error::LengthMismatch(format!(
            "{} dates for {} return rows",
            dates.len(),
            returns.nrows()
        )));
    }
    if !(cfg.rho > 0.0) {
        return Err(Error::InvalidRange(format!("rho {} must be positive", cfg.rho)));
    }
    let n = returns.ncols();
    let x = vec![1.0 / n as f64; n];
    let base_cost = vec![cfg.base_cost; n];
    let rolling = if cfg.window <= returns.nrows() {
        rolling_estimates(returns, cfg.window)?
    } else {
        Vec::new()
    };

    (0..cfg.blocks.count)
        .map(|b| {
            let label = cfg.blocks.label(b);
            let rows: Vec<usize> = (0..dates.len()).filter(|&i| cfg.blocks.block_of(dates[i]) == Some(b)).collect();
            let (first, last) = match (rows.first(), rows.last()) {
                (Some(&f), Some(&l)) => (f, l),
                _ => return Err(Error::EmptyBlock(label)),
            };
            let ann = moments(returns, first..(last + 1)).annualize(cfg.annualization);
            let baseline_utility = block_utility(&ann, &x, cfg.rho, &base_cost);
            let shocked_utilities = cfg
                .shocks
                .iter()
                .map(|s| {
                    let cost: Vec<f64> = base_cost.iter().map(|c| c * (1.0 + s.delta_cost)).collect();
                    block_utility(&ann.with_cov_scaled(1.0 + s.gamma_vol), &x, cfg.rho, &cost)
                })
                .collect();
            let risk_return_cloud = rolling
                .iter()
                .filter(|r| cfg.blocks.block_of(dates[r.end]) == Some(b))
                .map(|r| cloud_point(r, dates[r.end], &x, cfg.annualization))
                .collect();
            Ok(BlockResult {
                label,
                rows: rows.len(),
                baseline_utility,
                shocked_utilities,
                risk_return_cloud,
            })
        })
        .collect()
}

fn cloud_point(r: &RollingEstimate, date: NaiveDate, x: &[f64], factor: f64) -> CloudPoint {
    let ann = r.moments.clone().annualize(factor);
    let m = ann.get();
    CloudPoint {
        date,
        asset_mean: m.mean.clone(),
        asset_vol: (0..m.mean.len()).map(|j| m.cov[(j, j)].max(0.0).sqrt()).collect(),
        portfolio_mean: dot(&m.mean, x),
        portfolio_vol: quad_form(&m.cov, x).max(0.0).sqrt(),
    }
}

/// Column name for a shock in the summary table.
pub fn shock_column(shock: &ShockSpec, index: usize) -> String {
    match (shock.delta_cost != 0.0, shock.gamma_vol != 0.0) {
        (true, false) => "cost_shock_u".into(),
        (false, true) => "vol_shock_u".into(),
        _ => format!("shock{index}_u"),
    }
}

/// `summary.csv` plus one `block_<label>.csv` per block.
pub fn write_block_outputs(dir: &Path, results: &[BlockResult], tickers: &[String], shocks: &[ShockSpec]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut summary = csv::Writer::from_path(dir.join("summary.csv"))?;
    let mut header = vec!["block".to_string(), "baseline_u".to_string()];
    header.extend(shocks.iter().enumerate().map(|(i, s)| shock_column(s, i)));
    summary.write_record(&header)?;
    for r in results {
        let mut row = vec![r.label.clone(), r.baseline_utility.to_string()];
        row.extend(r.shocked_utilities.iter().map(f64::to_string));
        summary.write_record(&row)?;
    }
    summary.flush()?;

    for r in results {
        let mut w = csv::Writer::from_path(dir.join(format!("block_{}.csv", r.label)))?;
        let mut header = vec!["date".to_string()];
        for t in tickers {
            header.push(format!("rolling_mean_{t}"));
            header.push(format!("rolling_vol_{t}"));
        }
        header.push("portfolio_mean".into());
        header.push("portfolio_vol".into());
        w.write_record(&header)?;
        for p in &r.risk_return_cloud {
            let mut row = vec![p.date.format("%Y-%m-%d").to_string()];
            for (m, v) in p.asset_mean.iter().zip(&p.asset_vol) {
                row.push(m.to_string());
                row.push(v.to_string());
            }
            row.push(p.portfolio_mean.to_string());
            row.push(p.portfolio_vol.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    Ok(())
}
