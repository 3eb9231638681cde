//! Confidence intervals and hypothesis tests for the tail diagnostics.
//!
//! The occurrence, combined and severity ratios are all ratios of sample
//! means, so pointwise intervals follow from the bivariate central limit
//! theorem and the delta method for `g(x, y) = x / y`. Moments are plug-in
//! (divisor `n`) and accumulated in a fixed order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{
    DiagnosticError, ForecastObservationPair, OccurrenceCounts, PitRandomizer, TailSample,
};
use crate::dists::special;
use crate::numeric::{self, NeumaierSum};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("confidence level {0} is outside (0, 1)")]
    InvalidLevel(f64),
    #[error("null exceedance probability {0} leaves nothing to test")]
    DegenerateNull(f64),
    #[error("values must lie in [0, 1], got {0}")]
    NotAProbability(f64),
    #[error(transparent)]
    Diagnostic(#[from] DiagnosticError),
}

/// A normal-approximation confidence interval.
///
/// `degenerate` is set when the plug-in variance is zero because the
/// numerator is zero, in which case the interval collapses onto the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub std_error: f64,
    pub degenerate: bool,
}

impl ConfidenceInterval {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }
}

fn check_level(level: f64) -> Result<f64, InferenceError> {
    if level > 0.0 && level < 1.0 {
        Ok(special::normal_quantile(0.5 * (1.0 + level)))
    } else {
        Err(InferenceError::InvalidLevel(level))
    }
}

/// Plug-in variance of `x̄ / ȳ` for the pairs `(x_i, y_i)`, given
/// `x̄`, `ȳ`, `var(x)`, `var(y)` and `cov(x, y)`.
fn ratio_variance(x: f64, y: f64, var_x: f64, var_y: f64, cov: f64) -> f64 {
    let (gx, gy) = (1.0 / y, -x / (y * y));
    (gx * gx * var_x + 2.0 * gx * gy * cov + gy * gy * var_y).max(0.0)
}

/// Per-sample moments shared by all delta-method intervals at one threshold.
///
/// Exceedances are kept sorted by excess PIT together with prefix sums of the
/// centered forecast exceedance probabilities, so the covariance term for any
/// `u` is a lookup.
#[derive(Debug, Clone)]
pub struct DeltaMethod {
    n: usize,
    mean_survival: f64,
    var_survival: f64,
    sorted_pits: Vec<f64>,
    /// `prefix[k] = Σ_{j<k} (S_(j) - mean)` over exceedances in PIT order.
    prefix: Vec<f64>,
}

impl DeltaMethod {
    pub fn new(sample: &TailSample) -> Result<Self, InferenceError> {
        let n = sample.n();
        if n < 2 {
            return Err(InferenceError::InsufficientData { needed: 2, got: n });
        }
        let mean_survival = sample.denominator() / n as f64;
        let var_survival = numeric::sum(sample.survival().iter().map(|s| (s - mean_survival).powi(2))) / n as f64;
        let mut exceedances: Vec<(f64, f64)> = sample
            .pits()
            .iter()
            .zip(sample.survival())
            .filter_map(|(z, s)| z.map(|z| (z, s - mean_survival)))
            .collect();
        exceedances.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut prefix = Vec::with_capacity(exceedances.len() + 1);
        let mut acc = NeumaierSum::new();
        prefix.push(0.0);
        for &(_, d) in &exceedances {
            acc.add(d);
            prefix.push(acc.value());
        }
        Ok(Self {
            n,
            mean_survival,
            var_survival,
            sorted_pits: exceedances.into_iter().map(|(z, _)| z).collect(),
            prefix,
        })
    }

    fn count_below(&self, u: f64) -> usize {
        self.sorted_pits.partition_point(|&z| z <= u)
    }

    fn interval(&self, estimate: f64, variance: f64, z: f64, level: f64, degenerate: bool) -> ConfidenceInterval {
        let std_error = (variance / self.n as f64).sqrt();
        ConfidenceInterval {
            estimate,
            lower: estimate - z * std_error,
            upper: estimate + z * std_error,
            level,
            std_error,
            degenerate,
        }
    }

    /// Interval for `Σ 1{z_i <= u, y_i > t} / Σ (1 - F_i(t))` given the
    /// number `k` of qualifying exceedances.
    fn ratio_to_forecast(&self, k: usize, level: f64) -> Result<ConfidenceInterval, InferenceError> {
        let z = check_level(level)?;
        let y = self.mean_survival;
        if y * self.n as f64 <= crate::diagnostics::DEGENERATE_DENOMINATOR {
            return Err(DiagnosticError::DegenerateDenominator {
                threshold: f64::NAN,
                denominator: y * self.n as f64,
            }
            .into());
        }
        let x = k as f64 / self.n as f64;
        let var_x = x * (1.0 - x);
        let cov = self.prefix[k] / self.n as f64;
        let variance = ratio_variance(x, y, var_x, self.var_survival, cov);
        Ok(self.interval(x / y, variance, z, level, k == 0))
    }

    pub fn occurrence(&self, level: f64) -> Result<ConfidenceInterval, InferenceError> {
        self.ratio_to_forecast(self.sorted_pits.len(), level)
    }

    pub fn combined(&self, u: f64, level: f64) -> Result<ConfidenceInterval, InferenceError> {
        self.ratio_to_forecast(self.count_below(u), level)
    }

    pub fn severity(&self, u: f64, level: f64) -> Result<ConfidenceInterval, InferenceError> {
        let z = check_level(level)?;
        let n_t = self.sorted_pits.len();
        if n_t == 0 {
            return Err(DiagnosticError::NoExceedances { threshold: f64::NAN }.into());
        }
        let k = self.count_below(u);
        let p1 = k as f64 / self.n as f64;
        let p = n_t as f64 / self.n as f64;
        Ok(self.interval(k as f64 / n_t as f64, severity_variance(p1, p), z, level, k == 0))
    }
}

/// Limiting variance `p1 (p - p1) / p^3` of the severity ratio, where
/// `p1 = P(Z <= u, Y > t)` and `p = P(Y > t)`.
pub fn severity_variance(p1: f64, p: f64) -> f64 {
    (p1 * (p - p1) / (p * p * p)).max(0.0)
}

fn delta_method(pairs: &[ForecastObservationPair], t: f64) -> Result<DeltaMethod, InferenceError> {
    if pairs.len() < 2 {
        return Err(InferenceError::InsufficientData {
            needed: 2,
            got: pairs.len(),
        });
    }
    let sample = TailSample::new(pairs, t, &PitRandomizer::default())?;
    sample.occurrence_ratio()?;
    DeltaMethod::new(&sample)
}

/// Delta-method interval for the occurrence ratio at `t`.
pub fn delta_ci_occurrence(
    pairs: &[ForecastObservationPair],
    t: f64,
    level: f64,
) -> Result<ConfidenceInterval, InferenceError> {
    check_level(level)?;
    delta_method(pairs, t)?.occurrence(level)
}

/// Delta-method interval for the combined ratio at `(t, u)`.
pub fn delta_ci_combined(
    pairs: &[ForecastObservationPair],
    t: f64,
    u: f64,
    level: f64,
) -> Result<ConfidenceInterval, InferenceError> {
    check_level(level)?;
    delta_method(pairs, t)?.combined(u, level)
}

/// Delta-method interval for the severity ratio at `(t, u)`.
pub fn delta_ci_severity(
    pairs: &[ForecastObservationPair],
    t: f64,
    u: f64,
    level: f64,
) -> Result<ConfidenceInterval, InferenceError> {
    check_level(level)?;
    if pairs.len() < 2 {
        return Err(InferenceError::InsufficientData {
            needed: 2,
            got: pairs.len(),
        });
    }
    let sample = TailSample::new(pairs, t, &PitRandomizer::default())?;
    DeltaMethod::new(&sample)?.severity(u, level)
}

/// Result of a hypothesis test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    #[serde(rename = "null")]
    pub null_description: String,
}

/// Two-sided one-sample Kolmogorov–Smirnov test against `Unif(0, 1)`, with
/// the asymptotic Kolmogorov distribution for the p-value.
pub fn ks_uniform_test(values: &[f64]) -> Result<TestReport, InferenceError> {
    if values.is_empty() {
        return Err(InferenceError::InsufficientData { needed: 1, got: 0 });
    }
    if let Some(&bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(InferenceError::NotAProbability(bad));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let d = ks_statistic(&sorted);
    let lambda = (n as f64).sqrt() * d;
    Ok(TestReport {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
        n,
        null_description: "values are i.i.d. Unif(0, 1)".into(),
    })
}

/// `sup_x |F_n(x) - x|` for a sorted sample.
pub fn ks_statistic(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let above = (i + 1) as f64 / n - x;
            let below = x - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// `P(K > lambda)` for the Kolmogorov distribution.
///
/// Uses the alternating series `2 Σ (-1)^(k-1) exp(-2 k² λ²)` for
/// `λ >= 1.18` and the theta-function form of the cdf below, where the
/// alternating series converges slowly. Both are truncated once terms drop
/// below 1e-12.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    const TERM_CUTOFF: f64 = 1e-12;
    let p = if lambda < 1.18 {
        let factor = (2.0 * std::f64::consts::PI).sqrt() / lambda;
        let scale = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let mut cdf = 0.0;
        for k in 1..200 {
            let j = (2 * k - 1) as f64;
            let term = factor * (-j * j * scale).exp();
            cdf += term;
            if term < TERM_CUTOFF {
                break;
            }
        }
        1.0 - cdf
    } else {
        let mut sum = 0.0;
        for k in 1..200 {
            let kf = k as f64;
            let term = 2.0 * (-2.0 * kf * kf * lambda * lambda).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < TERM_CUTOFF {
                break;
            }
        }
        sum
    };
    p.clamp(0.0, 1.0)
}

/// Exact two-sided binomial test of `K ~ Bin(n, p)`: the p-value sums the
/// probabilities of all outcomes no more likely than the observed one.
pub fn binomial_test(k: u64, n: u64, p: f64) -> Result<TestReport, InferenceError> {
    if n == 0 {
        return Err(InferenceError::InsufficientData { needed: 1, got: 0 });
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(InferenceError::DegenerateNull(p));
    }
    let k = k.min(n);
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    let ln_n1 = special::ln_gamma(n as f64 + 1.0);
    let log_pmf = |j: u64| {
        let j = j as f64;
        let nf = n as f64;
        ln_n1 - special::ln_gamma(j + 1.0) - special::ln_gamma(nf - j + 1.0) + j * ln_p + (nf - j) * ln_q
    };
    // Relative slack so outcomes tied with the observed one in exact
    // arithmetic are not lost to rounding.
    let cutoff = log_pmf(k) + 1e-7f64.ln_1p();
    let mode = (((n + 1) as f64 * p).floor() as u64).min(n);

    // Largest j <= mode with log_pmf(j) <= cutoff (pmf nondecreasing there).
    let lower_edge = if log_pmf(0) > cutoff {
        None
    } else {
        let (mut lo, mut hi) = (0u64, mode);
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if log_pmf(mid) <= cutoff {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        Some(lo)
    };
    // Smallest j > mode with log_pmf(j) <= cutoff (pmf nonincreasing there).
    let upper_edge = if mode == n || log_pmf(n) > cutoff {
        None
    } else {
        let (mut lo, mut hi) = (mode + 1, n);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if log_pmf(mid) <= cutoff {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Some(lo)
    };

    let tail_sum = |start: u64, downward: bool| {
        let mut acc = NeumaierSum::new();
        let mut j = start;
        loop {
            let term = log_pmf(j).exp();
            acc.add(term);
            if term < 1e-17 * acc.value() || term == 0.0 {
                break;
            }
            if downward {
                if j == 0 {
                    break;
                }
                j -= 1;
            } else {
                if j == n {
                    break;
                }
                j += 1;
            }
        }
        acc.value()
    };
    let mut p_value = 0.0;
    if let Some(a) = lower_edge {
        p_value += tail_sum(a, true);
    }
    if let Some(b) = upper_edge {
        p_value += tail_sum(b, false);
    }
    Ok(TestReport {
        statistic: k as f64,
        p_value: p_value.clamp(0.0, 1.0),
        n: n as usize,
        null_description: format!("exceedance count ~ Binomial(n={n}, p={p})"),
    })
}

/// Binomial test of the exceedance count at `t` against `Bin(n, p̄)` with
/// `p̄` the mean forecast exceedance probability.
pub fn binomial_occurrence_test(
    pairs: &[ForecastObservationPair],
    t: f64,
) -> Result<TestReport, InferenceError> {
    if pairs.is_empty() {
        return Err(InferenceError::InsufficientData { needed: 1, got: 0 });
    }
    let mut counts = OccurrenceCounts::default();
    for pair in pairs {
        let t_i = pair.threshold.unwrap_or(t);
        let s = if t_i == f64::NEG_INFINITY {
            1.0
        } else {
            crate::dists::UnivariateDistribution::sf(&pair.forecast, t_i)
        };
        counts.push(s, pair.observation > t_i);
    }
    binomial_from_counts(&counts)
}

/// Binomial test from streamed occurrence counts.
pub fn binomial_from_counts(counts: &OccurrenceCounts) -> Result<TestReport, InferenceError> {
    let p_bar = counts.denominator() / counts.n as f64;
    binomial_test(counts.exceedances, counts.n, p_bar)
}

/// KS test of the excess PIT values of the exceedances at `t`.
pub fn ks_excess_pit_test(
    pairs: &[ForecastObservationPair],
    t: f64,
    randomizer: &PitRandomizer,
) -> Result<TestReport, InferenceError> {
    let sample = TailSample::new(pairs, t, randomizer)?;
    if sample.n_exceedances() == 0 {
        return Err(DiagnosticError::NoExceedances { threshold: t }.into());
    }
    ks_uniform_test(sample.sorted_pits())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::ForecastDistribution;

    fn uniform_pairs(ys: &[f64]) -> Vec<ForecastObservationPair> {
        ys.iter()
            .map(|&y| ForecastObservationPair::new(ForecastDistribution::uniform(0.0, 1.0).unwrap(), y).unwrap())
            .collect()
    }

    #[test]
    fn combined_at_one_is_occurrence() {
        let pairs = uniform_pairs(&[0.2, 0.6, 0.9, 0.55, 0.1]);
        let occ = delta_ci_occurrence(&pairs, 0.5, 0.95).unwrap();
        let comb = delta_ci_combined(&pairs, 0.5, 1.0, 0.95).unwrap();
        assert!((occ.estimate - comb.estimate).abs() < 1e-12);
        assert!((occ.std_error - comb.std_error).abs() < 1e-12);
    }

    #[test]
    fn deterministic_forecast_variance() {
        // All F_i(t) equal: σ² = Ĝ(1 - Ĝ) / (1 - F(t))².
        let pairs = uniform_pairs(&[0.2, 0.6, 0.9, 0.55, 0.1, 0.3]);
        let ci = delta_ci_occurrence(&pairs, 0.5, 0.95).unwrap();
        let g = 3.0 / 6.0;
        let sigma2: f64 = g * (1.0 - g) / 0.25;
        assert!((ci.std_error - (sigma2 / 6.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn three_point_combined_interval() {
        let pairs = uniform_pairs(&[0.2, 0.6, 0.9]);
        let ci = delta_ci_combined(&pairs, 0.5, 0.5, 0.95).unwrap();
        assert!((ci.estimate - 2.0 / 3.0).abs() < 1e-12);
        // Â = 1/3, B̂ = 1/2, var(1 - F(t)) = 0: σ² = Â(1 - Â) / B̂².
        let sigma2: f64 = (1.0 / 3.0) * (2.0 / 3.0) / 0.25;
        assert!((ci.std_error - (sigma2 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_numerator_is_degenerate() {
        let pairs = uniform_pairs(&[0.2, 0.6, 0.9]);
        let ci = delta_ci_combined(&pairs, 0.5, 0.1, 0.95).unwrap();
        assert!(ci.degenerate);
        assert_eq!((ci.estimate, ci.lower, ci.upper), (0.0, 0.0, 0.0));
    }

    #[test]
    fn severity_variance_formula() {
        assert!((severity_variance(0.25, 0.5) - 0.5).abs() < 1e-15);
        assert_eq!(severity_variance(0.5, 0.5), 0.0);
        let pairs = uniform_pairs(&[0.2, 0.6, 0.9]);
        let ci = delta_ci_severity(&pairs, 0.5, 1.0, 0.95).unwrap();
        assert_eq!(ci.std_error, 0.0);
        assert_eq!(ci.estimate, 1.0);
        let none = uniform_pairs(&[0.2, 0.3]);
        assert!(delta_ci_severity(&none, 0.5, 0.5, 0.95).is_err());
    }

    #[test]
    fn input_validation() {
        let pairs = uniform_pairs(&[0.7]);
        assert!(matches!(
            delta_ci_occurrence(&pairs, 0.5, 0.95),
            Err(InferenceError::InsufficientData { .. })
        ));
        let pairs = uniform_pairs(&[0.7, 0.8]);
        assert!(matches!(delta_ci_occurrence(&pairs, 0.5, 1.0), Err(InferenceError::InvalidLevel(_))));
    }

    #[test]
    fn ks_single_point() {
        let report = ks_uniform_test(&[0.5]).unwrap();
        assert_eq!(report.statistic, 0.5);
        assert_eq!(report.n, 1);
        assert!(ks_uniform_test(&[]).is_err());
    }

    #[test]
    fn ks_statistic_matches_brute_force() {
        let values: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        let n = values.len() as f64;
        // Brute force over both sides of every jump of the empirical cdf.
        let mut brute: f64 = 0.0;
        for &x in &values {
            let at = values.iter().filter(|&&v| v <= x).count() as f64 / n;
            let before = values.iter().filter(|&&v| v < x).count() as f64 / n;
            brute = brute.max((at - x).abs()).max((before - x).abs());
        }
        let report = ks_uniform_test(&values).unwrap();
        assert!((report.statistic - brute).abs() < 1e-15);
        assert!((report.statistic - 0.1).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // Standard tabulated critical values of the Kolmogorov distribution.
        assert!((kolmogorov_survival(1.3580986) - 0.05).abs() < 1e-6);
        assert!((kolmogorov_survival(1.6276236) - 0.01).abs() < 1e-6);
        assert!((kolmogorov_survival(1.2238478) - 0.10).abs() < 1e-6);
        // Both branches agree where they meet.
        let below = kolmogorov_survival(1.18 - 1e-12);
        let above = kolmogorov_survival(1.18);
        assert!((below - above).abs() < 1e-10);
        let mut last = 1.0;
        for i in 1..400 {
            let p = kolmogorov_survival(i as f64 * 0.01);
            assert!(p <= last + 1e-15);
            last = p;
        }
    }

    fn brute_binomial(k: u64, n: u64, p: f64) -> f64 {
        let pmf: Vec<f64> = (0..=n)
            .map(|j| {
                let mut c = 1.0;
                for i in 0..j {
                    c *= (n - i) as f64 / (i + 1) as f64;
                }
                c * p.powi(j as i32) * (1.0 - p).powi((n - j) as i32)
            })
            .collect();
        let observed = pmf[k as usize];
        pmf.iter().filter(|&&q| q <= observed * (1.0 + 1e-7)).sum::<f64>().min(1.0)
    }

    #[test]
    fn binomial_examples() {
        assert!((binomial_test(3, 3, 0.5).unwrap().p_value - 0.25).abs() < 1e-12);
        assert!((binomial_test(5, 10, 0.5).unwrap().p_value - 1.0).abs() < 1e-12);
        assert!(matches!(binomial_test(1, 3, 0.0), Err(InferenceError::DegenerateNull(_))));
        assert!(matches!(binomial_test(1, 3, 1.0), Err(InferenceError::DegenerateNull(_))));
    }

    #[test]
    fn binomial_matches_enumeration() {
        for &(n, p) in &[(1u64, 0.3), (7, 0.2), (20, 0.5), (40, 0.07), (60, 0.9)] {
            for k in 0..=n {
                let fast = binomial_test(k, n, p).unwrap().p_value;
                let slow = brute_binomial(k, n, p);
                assert!((fast - slow).abs() < 1e-10, "n={n} p={p} k={k}: {fast} vs {slow}");
            }
        }
    }

    #[test]
    fn binomial_occurrence_uses_mean_probability() {
        let pairs = uniform_pairs(&[0.6, 0.7, 0.9]);
        let report = binomial_occurrence_test(&pairs, 0.5).unwrap();
        assert_eq!(report.statistic, 3.0);
        assert!((report.p_value - 0.25).abs() < 1e-12);
        let json = serde_json::to_value(&report).unwrap();
        assert!(json.get("null").is_some() && json.get("p_value").is_some());
    }
}
