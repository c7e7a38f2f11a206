//! Point-estimation summaries, percentile bootstrap intervals, coverage
//! reports, log-log convergence slopes and paired significance tests.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
}

impl SummaryStats {
    /// `mse = bias² + variance`.
    pub fn from_parts(bias: f64, variance: f64) -> Self {
        Self {
            bias,
            variance,
            mse: bias * bias + variance,
        }
    }
}

/// Bias, variance (divisor R) and MSE of `estimates` around `truth`.
pub fn summarize_estimates(estimates: &[f64], truth: f64) -> Result<SummaryStats> {
    summarize_against(estimates, &vec![truth; estimates.len()])
}

/// As [`summarize_estimates`] with one truth per estimate; the variance is
/// that of the errors, so it reduces to the estimates' variance for a
/// common truth.
pub fn summarize_against(estimates: &[f64], truths: &[f64]) -> Result<SummaryStats> {
    if estimates.is_empty() {
        return Err(Error::EmptyInput("estimates"));
    }
    if estimates.len() != truths.len() {
        return Err(Error::LengthMismatch(format!(
            "{} estimates for {} truths",
            estimates.len(),
            truths.len()
        )));
    }
    let r = estimates.len() as f64;
    let errors: Vec<f64> = estimates.iter().zip(truths).map(|(e, t)| e - t).collect();
    let bias = errors.iter().sum::<f64>() / r;
    let variance = errors.iter().map(|e| (e - bias).powi(2)).sum::<f64>() / r;
    Ok(SummaryStats::from_parts(bias, variance))
}

/// Linearly interpolated sample quantile (`q` in [0, 1]); NaN when empty.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMethod {
    Nonparametric,
    Parametric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub method: BootstrapMethod,
    pub b: usize,
}

impl ConfidenceInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidRange(format!("confidence level {level} outside (0, 1)")));
    }
    Ok(())
}

/// Percentile interval: the `⌈B·α/2⌉`-th and `⌈B(1−α/2)⌉`-th order statistics.
pub fn percentile_interval(samples: &[f64], level: f64) -> (f64, f64) {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let b = s.len() as f64;
    let alpha = 1.0 - level;
    let rank = |q: f64| -> usize {
        let k = (b * q - 1e-9).ceil().max(1.0) as usize;
        k.min(s.len()) - 1
    };
    (s[rank(alpha / 2.0)], s[rank(1.0 - alpha / 2.0)])
}

/// Period-resampling bootstrap. `estimator` receives one multiplicity per
/// period and returns a parameter vector; one interval per parameter.
pub fn bootstrap_ci<R, F>(rng: &mut R, periods: usize, b: usize, level: f64, estimator: F) -> Result<Vec<ConfidenceInterval>>
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let replicates = bootstrap_replicates(rng, periods, b, level, estimator)?;
    Ok(intervals_from(&replicates, level, BootstrapMethod::Nonparametric, b))
}

/// Resampled estimates behind [`bootstrap_ci`], one row per successful resample.
pub fn bootstrap_replicates<R, F>(rng: &mut R, periods: usize, b: usize, level: f64, estimator: F) -> Result<Vec<Vec<f64>>>
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    if b < 2 {
        return Err(Error::InvalidRange(format!("bootstrap needs B >= 2, got {b}")));
    }
    check_level(level)?;
    if periods == 0 {
        return Err(Error::EmptyInput("bootstrap data"));
    }
    let weights: Vec<Vec<f64>> = (0..b)
        .map(|_| {
            let mut w = vec![0.0; periods];
            for _ in 0..periods {
                w[rng.random_range(0..periods)] += 1.0;
            }
            w
        })
        .collect();
    let results: Vec<Result<Vec<f64>>> = weights.par_iter().map(|w| estimator(w)).collect();
    let total = results.len();
    let ok: Vec<Vec<f64>> = results.into_iter().filter_map(|r| r.ok()).collect();
    let failed = total - ok.len();
    if 2 * failed > total {
        return Err(Error::EstimatorFailed { failed, total });
    }
    Ok(ok)
}

fn intervals_from(replicates: &[Vec<f64>], level: f64, method: BootstrapMethod, b: usize) -> Vec<ConfidenceInterval> {
    let dims = replicates.first().map_or(0, Vec::len);
    (0..dims)
        .map(|d| {
            let column: Vec<f64> = replicates.iter().map(|r| r[d]).collect();
            let (lo, hi) = percentile_interval(&column, level);
            ConfidenceInterval {
                lo,
                hi,
                level,
                method,
                b,
            }
        })
        .collect()
}

/// Percentile intervals from `B` draws of `Normal(center_i, variance_i)`.
pub fn parametric_bootstrap_ci<R: Rng + ?Sized>(
    rng: &mut R,
    center: &[f64],
    variance: &[f64],
    b: usize,
    level: f64,
) -> Result<Vec<ConfidenceInterval>> {
    if b < 2 {
        return Err(Error::InvalidRange(format!("bootstrap needs B >= 2, got {b}")));
    }
    check_level(level)?;
    if center.len() != variance.len() {
        return Err(Error::LengthMismatch("center and variance".into()));
    }
    let dists: Vec<Normal<f64>> = center
        .iter()
        .zip(variance)
        .map(|(&c, &v)| Normal::new(c, v.max(0.0).sqrt()).map_err(|e| Error::InvalidRange(e.to_string())))
        .collect::<Result<_>>()?;
    let replicates: Vec<Vec<f64>> = (0..b).map(|_| dists.iter().map(|d| d.sample(rng)).collect()).collect();
    Ok(intervals_from(&replicates, level, BootstrapMethod::Parametric, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub coverage: f64,
    pub calibration_error: f64,
    pub mean_length: f64,
    pub std_length: f64,
    pub median_length: f64,
    pub max_length: f64,
    /// `level / mean_length`; infinite for zero-width intervals.
    pub efficiency: f64,
}

pub fn coverage_report(intervals: &[ConfidenceInterval], truth: f64) -> Result<CoverageReport> {
    coverage_report_against(intervals, &vec![truth; intervals.len()])
}

/// Coverage with a separate truth per interval.
pub fn coverage_report_against(intervals: &[ConfidenceInterval], truths: &[f64]) -> Result<CoverageReport> {
    let first = intervals.first().ok_or(Error::EmptyInput("intervals"))?;
    if intervals.iter().any(|ci| ci.level != first.level) {
        return Err(Error::MixedLevels);
    }
    if truths.len() != intervals.len() {
        return Err(Error::LengthMismatch("intervals and truths".into()));
    }
    let m = intervals.len() as f64;
    let hits = intervals.iter().zip(truths).filter(|(ci, &t)| ci.contains(t)).count();
    let coverage = hits as f64 / m;
    let mut lengths: Vec<f64> = intervals.iter().map(ConfidenceInterval::length).collect();
    let mean_length = lengths.iter().sum::<f64>() / m;
    let std_length = (lengths.iter().map(|l| (l - mean_length).powi(2)).sum::<f64>() / m).sqrt();
    lengths.sort_by(f64::total_cmp);
    let k = lengths.len() / 2;
    let median_length = if lengths.len() % 2 == 1 {
        lengths[k]
    } else {
        0.5 * (lengths[k - 1] + lengths[k])
    };
    Ok(CoverageReport {
        coverage,
        calibration_error: (coverage - first.level).abs(),
        mean_length,
        std_length,
        median_length,
        max_length: *lengths.last().expect("nonempty"),
        efficiency: first.level / mean_length,
    })
}

/// α in `mse ∝ T^{−α}`: the negated OLS slope of log mse on log T.
pub fn convergence_slope(mse_by_t: &[(f64, f64)]) -> Result<f64> {
    if mse_by_t.len() < 3 {
        return Err(Error::InvalidRange(format!(
            "convergence slope needs at least 3 points, got {}",
            mse_by_t.len()
        )));
    }
    if let Some(&(t, m)) = mse_by_t.iter().find(|(t, m)| !(*t > 0.0 && *m > 0.0)) {
        return Err(Error::NonPositiveValue(if t > 0.0 { m } else { t }));
    }
    let xs: Vec<f64> = mse_by_t.iter().map(|(t, _)| t.ln()).collect();
    let ys: Vec<f64> = mse_by_t.iter().map(|(_, m)| m.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidRange("all T values are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(-sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTests {
    pub t_stat: f64,
    pub t_p: f64,
    /// min(W⁺, W⁻) over nonzero differences.
    pub wilcoxon_stat: f64,
    pub wilcoxon_p: f64,
    /// Bonferroni-adjusted paired-t p-value.
    pub bonferroni_p: f64,
    pub bonferroni_wilcoxon_p: f64,
    /// Normal approximation used with 25 or fewer nonzero differences.
    pub small_sample: bool,
}

pub fn bonferroni(p: f64, m: usize) -> f64 {
    (p * m as f64).min(1.0)
}

/// Two-sided paired t-test and Wilcoxon signed-rank test on `a − b`.
pub fn paired_tests(a: &[f64], b: &[f64], m_comparisons: usize) -> Result<PairedTests> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(format!("paired samples of length {} and {}", a.len(), b.len())));
    }
    if a.len() < 5 {
        return Err(Error::DegenerateSample(format!("need at least 5 pairs, got {}", a.len())));
    }
    let m_comparisons = m_comparisons.max(1);
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);

    let (t_stat, t_p) = if d.iter().all(|&v| v == 0.0) {
        (0.0, 1.0)
    } else if var == 0.0 {
        (mean.signum() * f64::INFINITY, 0.0)
    } else {
        let t = mean / (var / n).sqrt();
        let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("valid degrees of freedom");
        (t, (2.0 * (1.0 - dist.cdf(t.abs()))).min(1.0))
    };

    let (wilcoxon_stat, wilcoxon_p, nonzero) = wilcoxon(&d);
    Ok(PairedTests {
        t_stat,
        t_p,
        wilcoxon_stat,
        wilcoxon_p,
        bonferroni_p: bonferroni(t_p, m_comparisons),
        bonferroni_wilcoxon_p: bonferroni(wilcoxon_p, m_comparisons),
        small_sample: nonzero <= 25,
    })
}

/// Signed-rank statistic, normal-approximation p-value (tie-corrected, no
/// continuity correction) and the number of nonzero differences.
fn wilcoxon(d: &[f64]) -> (f64, f64, usize) {
    let mut nz: Vec<f64> = d.iter().cloned().filter(|&v| v != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return (0.0, 1.0, 0);
    }
    nz.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let mut ranks = vec![0.0; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nz[j + 1].abs() == nz[i].abs() {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for r in ranks.iter_mut().take(j + 1).skip(i) {
            *r = avg;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let nf = n as f64;
    let total = nf * (nf + 1.0) / 2.0;
    let w_minus = total - w_plus;
    let mean = total / 2.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = (w_plus - mean) / var.sqrt();
        let std = StdNormal::new(0.0, 1.0).expect("standard normal");
        (2.0 * (1.0 - std.cdf(z.abs()))).min(1.0)
    };
    (w_plus.min(w_minus), p, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn summary_of_exact_estimates_is_zero() {
        let s = summarize_estimates(&[2.0, 2.0, 2.0], 2.0).unwrap();
        assert_eq!((s.bias, s.variance, s.mse), (0.0, 0.0, 0.0));
        assert!(matches!(summarize_estimates(&[], 1.0), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn summary_uses_population_variance() {
        let s = summarize_estimates(&[1.0, 3.0], 1.0).unwrap();
        assert_eq!(s.bias, 1.0);
        assert_eq!(s.variance, 1.0);
        assert_eq!(s.mse, 2.0);
    }

    #[test]
    fn per_trial_truths_measure_error_spread() {
        // Estimates vary but every error is +1: no variance.
        let s = summarize_against(&[2.0, 6.0, 9.0], &[1.0, 5.0, 8.0]).unwrap();
        assert_eq!((s.bias, s.variance, s.mse), (1.0, 0.0, 1.0));
        let s = summarize_against(&[1.0, 5.0], &[2.0, 2.0]).unwrap();
        assert_eq!((s.bias, s.variance, s.mse), (1.0, 4.0, 5.0));
    }

    #[test]
    fn percentile_endpoints_are_order_statistics() {
        let samples: Vec<f64> = (1..=200).rev().map(|v| v as f64).collect();
        let (lo, hi) = percentile_interval(&samples, 0.95);
        assert_eq!((lo, hi), (5.0, 195.0));
    }

    #[test]
    fn degenerate_resamples_give_zero_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ci = bootstrap_ci(&mut rng, 10, 50, 0.95, |_| Ok(vec![0.3])).unwrap();
        assert_eq!(ci[0].lo, 0.3);
        assert_eq!(ci[0].hi, 0.3);
    }

    #[test]
    fn failing_estimator_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = bootstrap_ci(&mut rng, 10, 10, 0.95, |_| Err(Error::AllCandidatesFailed));
        assert!(matches!(r, Err(Error::EstimatorFailed { failed: 10, total: 10 })));
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let data: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let est = |w: &[f64]| Ok(vec![w.iter().zip(&data).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>()]);
        let a = bootstrap_ci(&mut ChaCha8Rng::seed_from_u64(4), 30, 100, 0.9, est).unwrap();
        let b = bootstrap_ci(&mut ChaCha8Rng::seed_from_u64(4), 30, 100, 0.9, est).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parametric_zero_variance_is_a_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ci = parametric_bootstrap_ci(&mut rng, &[1.5, 0.0], &[0.0, 0.01], 500, 0.95).unwrap();
        assert_eq!((ci[0].lo, ci[0].hi), (1.5, 1.5));
        assert!(ci[1].lo < 0.0 && ci[1].hi > 0.0);
    }

    #[test]
    fn coverage_definitions() {
        let ci = |lo: f64, hi: f64| ConfidenceInterval {
            lo,
            hi,
            level: 0.95,
            method: BootstrapMethod::Nonparametric,
            b: 200,
        };
        let r = coverage_report(&[ci(0.0, 0.95), ci(0.5, 1.45)], 0.7).unwrap();
        assert_eq!(r.coverage, 1.0);
        assert!((r.calibration_error - 0.05).abs() < 1e-15);
        assert!((r.efficiency - 1.0).abs() < 1e-12);
        let mut other = ci(0.0, 1.0);
        other.level = 0.9;
        assert!(matches!(coverage_report(&[ci(0.0, 1.0), other], 0.5), Err(Error::MixedLevels)));
    }

    #[test]
    fn slope_of_power_law_and_constant() {
        let pts: Vec<(f64, f64)> = [25.0, 50.0, 100.0, 200.0].iter().map(|&t: &f64| (t, t.powf(-0.5))).collect();
        assert!((convergence_slope(&pts).unwrap() - 0.5).abs() < 1e-10);
        let flat: Vec<(f64, f64)> = [25.0, 50.0, 100.0].iter().map(|&t| (t, 0.3)).collect();
        assert!(convergence_slope(&flat).unwrap().abs() < 1e-12);
        assert!(matches!(convergence_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]), Err(Error::NonPositiveValue(_))));
    }

    #[test]
    fn identical_samples_have_unit_p() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = paired_tests(&a, &a, 3).unwrap();
        assert_eq!((r.t_p, r.wilcoxon_p, r.bonferroni_p), (1.0, 1.0, 1.0));
    }

    #[test]
    fn interpolated_quantiles() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(median(&v), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
    }

    #[test]
    fn bonferroni_scales_and_caps() {
        assert!((bonferroni(0.02, 3) - 0.06).abs() < 1e-15);
        assert_eq!(bonferroni(0.6, 3), 1.0);
    }

    proptest! {
        #[test]
        fn mse_identity(est in prop::collection::vec(-5.0f64..5.0, 1..50), truth in -5.0f64..5.0) {
            let s = summarize_estimates(&est, truth).unwrap();
            prop_assert!((s.mse - (s.bias * s.bias + s.variance)).abs() < 1e-12);
        }

        #[test]
        fn wider_level_contains_narrower(samples in prop::collection::vec(-10.0f64..10.0, 2..300)) {
            let (lo90, hi90) = percentile_interval(&samples, 0.90);
            let (lo99, hi99) = percentile_interval(&samples, 0.99);
            prop_assert!(lo99 <= lo90 && hi90 <= hi99);
        }
    }
}
