//! Continuous ranked probability score (CRPS), Monte Carlo expected scores,
//! the mixture insensitivity experiment and CRPS-minimizing EMOS fitting.
//!
//! Ensembles are scored in closed form. Everything else goes through
//! adaptive quadrature of `∫ F(x)² dx` below the observation and
//! `∫ S(x)² dx` above it, split at the observation, at atoms, at support
//! bounds and at a ladder of quantiles so heavy tails are resolved.

mod emos;
pub mod nelder_mead;
pub mod quadrature;

pub use emos::{emos_fit, EmosFamily, EmosFit, EmosModel, EmosSample};
pub use nelder_mead::{NelderMeadOptions, NelderMeadResult};

use rand::distr::Open01;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dists::{DistError, ForecastDistribution, UnivariateDistribution};
use crate::numeric::{self, NeumaierSum};

/// Absolute tolerance of the quadrature CRPS.
pub const CRPS_TOLERANCE: f64 = 1e-8;

const BREAK_LEVELS: [f64; 13] = [
    1e-8, 1e-6, 1e-4, 1e-2, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 0.9999, 0.999999, 0.99999999,
];

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("CRPS diverges for {0}: the forecast has no finite mean")]
    DivergentScore(String),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("mixture weight {0} outside [0, 1)")]
    InvalidLambda(f64),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("every training ensemble has zero spread; the scale predictor is degenerate")]
    DegeneratePredictor,
    #[error("EMOS objective is not finite at the initial coefficients ({0})")]
    Initialization(f64),
    #[error("invalid EMOS model: {0}")]
    InvalidModel(String),
    #[error("training row {index} is not finite")]
    NonFiniteRow { index: usize },
}

/// Monte Carlo estimate of an expected score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl ScoreEstimate {
    /// Mean and `sd / sqrt(n)` of i.i.d. draws.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = numeric::mean(values);
        let ss = numeric::sum(values.iter().map(|v| (v - mean) * (v - mean)));
        let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
        Self { mean, std_error: sd / (n as f64).sqrt(), n }
    }

    /// Mean of one draw per stratum. The standard error comes from squared
    /// differences of neighbouring strata, which overstates the variance
    /// by the (small) drift in stratum means.
    pub fn from_stratified(values: &[f64]) -> Self {
        let n = values.len();
        let mean = numeric::mean(values);
        let mut ss = NeumaierSum::new();
        let mut k = 0;
        while k + 1 < n {
            let d = values[k] - values[k + 1];
            ss.add(d * d);
            k += 2;
        }
        if n % 2 == 1 && n > 1 {
            let d = values[n - 1] - values[n - 2];
            ss.add(d * d);
        }
        Self { mean, std_error: ss.value().sqrt() / n as f64, n }
    }
}

/// CRPS of `dist` at observation `y`.
pub fn crps(dist: &ForecastDistribution, y: f64) -> Result<f64, ScoringError> {
    match dist.ensemble_members() {
        Some(members) => Ok(crps_ensemble(members, y)),
        None => crps_quadrature(dist, y),
    }
}

/// Closed form for an ensemble: `(1/m) Σ|x_i − y| − (1/2m²) ΣΣ|x_i − x_j|`,
/// with the double sum done in `O(m)` over sorted members.
pub fn crps_ensemble(sorted_members: &[f64], y: f64) -> f64 {
    let m = sorted_members.len() as f64;
    let spread = numeric::sum(sorted_members.iter().map(|x| (x - y).abs()));
    let pairs = numeric::sum(
        sorted_members
            .iter()
            .enumerate()
            .map(|(i, x)| (2.0 * (i as f64 + 1.0) - m - 1.0) * x),
    );
    spread / m - pairs / (m * m)
}

/// Integral form of the CRPS, valid for any distribution with a finite mean,
/// ensembles included.
pub fn crps_quadrature(dist: &ForecastDistribution, y: f64) -> Result<f64, ScoringError> {
    if !dist.has_finite_mean() {
        return Err(ScoringError::DivergentScore(dist.to_string()));
    }
    let support = dist.support();
    let mut breaks = breakpoints(dist);
    breaks.extend(dist.atoms());
    breaks.push(support.lower);
    breaks.push(support.upper);
    breaks.push(y);
    breaks.retain(|x| x.is_finite());
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let scale = match (breaks.first(), breaks.last()) {
        (Some(lo), Some(hi)) if hi > lo => hi - lo,
        _ => 1.0,
    };
    let tol = 0.5 * CRPS_TOLERANCE;
    let (below, _) = quadrature::integrate_split(
        |x| {
            let f = dist.cdf(x);
            f * f
        },
        support.lower,
        y.min(support.upper),
        &breaks,
        scale,
        tol,
    );
    let (above, _) = quadrature::integrate_split(
        |x| {
            let s = dist.sf(x);
            s * s
        },
        y.max(support.lower),
        support.upper,
        &breaks,
        scale,
        tol,
    );
    // Outside the support one of the integrands is identically 1.
    let gap = if y < support.lower {
        support.lower - y
    } else if y > support.upper {
        y - support.upper
    } else {
        0.0
    };
    Ok((below + above + gap).max(0.0))
}

fn breakpoints(dist: &ForecastDistribution) -> Vec<f64> {
    if let Some(components) = dist.mixture_components() {
        return components
            .iter()
            .filter(|(w, _)| *w > 0.0)
            .flat_map(|(_, d)| breakpoints(d))
            .collect();
    }
    BREAK_LEVELS
        .iter()
        .filter_map(|&u| dist.quantile(u).ok())
        .collect()
}

fn crps_all(dist: &ForecastDistribution, ys: &[f64]) -> Result<Vec<f64>, ScoringError> {
    ys.par_iter().map(|&y| crps(dist, y)).collect()
}

/// `E_G[crps(F, Y)]` from `n` independent draws of `truth`.
pub fn expected_score(
    forecast: &ForecastDistribution,
    truth: &ForecastDistribution,
    n: usize,
    seed: u64,
) -> Result<ScoreEstimate, ScoringError> {
    if n < 2 {
        return Err(ScoringError::InsufficientData { needed: 2, got: n });
    }
    if !forecast.has_finite_mean() {
        return Err(ScoringError::DivergentScore(forecast.to_string()));
    }
    let ys = numeric::chunked(n, seed, |rng| truth.sample(rng));
    Ok(ScoreEstimate::from_values(&crps_all(forecast, &ys)?))
}

/// One draw from each of `n` equal-probability strata of `dist`:
/// `Y_k = Q((k + U_k) / n)` with `U_k` uniform on `(0, 1)`.
pub fn stratified_draws(dist: &ForecastDistribution, n: usize, seed: u64) -> Result<Vec<f64>, DistError> {
    let us: Vec<f64> = numeric::chunked(n, seed, |rng| rng.sample(Open01));
    us.par_iter()
        .enumerate()
        .map(|(k, u)| dist.quantile(((k as f64 + u) / n as f64).min(1.0 - f64::EPSILON / 2.0)))
        .collect()
}

/// Both sides of the mixture bound at one weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InsensitivityRow {
    pub lambda: f64,
    /// `|S̄(F_λ, G) − S̄(G, G)|`.
    pub gap: f64,
    pub gap_std_error: f64,
    /// `λ/(1−λ) |S̄(G, H) − S̄(H, H)|`.
    pub bound: f64,
    pub bound_std_error: f64,
    /// Whether `gap ≤ bound` up to three combined standard errors.
    pub holds: bool,
}

/// For `F_λ = λH + (1−λ)G`, estimates the expected-score gap between `F_λ`
/// and the truth `G` under `G`, and the bound
/// `λ/(1−λ) |S̄(G, H) − S̄(H, H)|` under `H`.
///
/// Both expectations use stratified draws shared across all weights, so the
/// differences are estimated with common random numbers.
pub fn mixture_insensitivity_check(
    g: &ForecastDistribution,
    h: &ForecastDistribution,
    lambdas: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<InsensitivityRow>, ScoringError> {
    if let Some(&bad) = lambdas.iter().find(|l| !(0.0..1.0).contains(*l)) {
        return Err(ScoringError::InvalidLambda(bad));
    }
    if n < 2 {
        return Err(ScoringError::InsufficientData { needed: 2, got: n });
    }
    let ys = stratified_draws(g, n, seed)?;
    let ys_h = stratified_draws(h, n, seed ^ 0x5DEE_CE66_D1CE_5EED)?;
    let g_on_g = crps_all(g, &ys)?;
    let g_on_h = crps_all(g, &ys_h)?;
    let h_on_h = crps_all(h, &ys_h)?;
    let base: Vec<f64> = g_on_h.iter().zip(&h_on_h).map(|(a, b)| a - b).collect();
    let base = ScoreEstimate::from_stratified(&base);
    lambdas
        .iter()
        .map(|&lambda| {
            let (gap, gap_se) = if lambda == 0.0 {
                (0.0, 0.0)
            } else {
                let f = ForecastDistribution::mixture2(lambda, h.clone(), g.clone())?;
                let diffs: Vec<f64> = crps_all(&f, &ys)?.iter().zip(&g_on_g).map(|(a, b)| a - b).collect();
                let est = ScoreEstimate::from_stratified(&diffs);
                (est.mean.abs(), est.std_error)
            };
            let factor = lambda / (1.0 - lambda);
            let bound = factor * base.mean.abs();
            let bound_se = factor * base.std_error;
            let slack = 3.0 * (gap_se * gap_se + bound_se * bound_se).sqrt();
            Ok(InsensitivityRow {
                lambda,
                gap,
                gap_std_error: gap_se,
                bound,
                bound_std_error: bound_se,
                holds: gap <= bound + slack,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> ForecastDistribution {
        s.parse().unwrap()
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(crps(&ForecastDistribution::ensemble(vec![2.5]).unwrap(), -1.0).unwrap(), 3.5);
        let two = ForecastDistribution::ensemble(vec![0.0, 1.0]).unwrap();
        assert!((crps(&two, 0.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn uniform_at_lower_end() {
        let u = ForecastDistribution::uniform(0.0, 1.0).unwrap();
        assert!((crps(&u, 0.0).unwrap() - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn normal_matches_closed_form() {
        // Gneiting & Raftery: σ[z(2Φ(z) − 1) + 2φ(z) − 1/√π]
        let (mu, sigma) = (1.0, 2.0);
        let n = ForecastDistribution::normal(mu, sigma).unwrap();
        for y in [-10.0, -1.0, 0.3, 1.0, 4.0, 25.0] {
            let z: f64 = (y - mu) / sigma;
            let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let cdf = 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2);
            let exact = sigma * (z * (2.0 * cdf - 1.0) + 2.0 * phi - 1.0 / std::f64::consts::PI.sqrt());
            assert!((crps(&n, y).unwrap() - exact).abs() < 1e-8, "y={y}");
        }
    }

    #[test]
    fn gpd_matches_closed_form() {
        // For GPD(σ, ξ) at y = 0: ∫ S² = σ / (2 − ξ).
        for xi in [0.0, 0.25, 0.5, 0.9] {
            let g = ForecastDistribution::gpd(1.5, xi).unwrap();
            assert!((crps(&g, 0.0).unwrap() - 1.5 / (2.0 - xi)).abs() < 1e-8, "xi={xi}");
        }
    }

    #[test]
    fn outside_support_adds_distance() {
        let u = ForecastDistribution::uniform(0.0, 1.0).unwrap();
        assert!((crps(&u, -2.0).unwrap() - (2.0 + 1.0 / 3.0)).abs() < 1e-9);
        assert!((crps(&u, 3.0).unwrap() - (2.0 + 1.0 / 3.0)).abs() < 1e-9);
    }

    #[test]
    fn censored_logistic_has_atom_contribution() {
        // Censored at 0 with y = 0: ∫_0^∞ S(x)² dx only.
        let f = d("censored_below(logistic(mu=0.5, s=1), at=0)");
        let direct = quadrature::integrate_upper_tail(
            |x| {
                let s = 1.0 / (1.0 + (x - 0.5).exp());
                s * s
            },
            0.0,
            1.0,
            1e-12,
        )
        .0;
        assert!((crps(&f, 0.0).unwrap() - direct).abs() < 1e-8);
    }

    #[test]
    fn infinite_mean_is_rejected() {
        let g = ForecastDistribution::gpd(1.0, 1.2).unwrap();
        assert!(matches!(crps(&g, 1.0), Err(ScoringError::DivergentScore(_))));
    }

    #[test]
    fn degenerate_forecast_scores_zero() {
        let point = ForecastDistribution::ensemble(vec![1.7]).unwrap();
        assert_eq!(crps(&point, 1.7).unwrap(), 0.0);
        assert!(crps_quadrature(&point, 1.7).unwrap().abs() < 1e-9);
    }

    #[test]
    fn uniform_expected_score() {
        let u = ForecastDistribution::uniform(0.0, 1.0).unwrap();
        let est = expected_score(&u, &u, 20_000, 3).unwrap();
        assert!((est.mean - 1.0 / 6.0).abs() < 3.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn std_error_halves_with_four_times_n() {
        let g = ForecastDistribution::normal(0.0, 1.0).unwrap();
        let f = ForecastDistribution::normal(0.5, 1.5).unwrap();
        let a = expected_score(&f, &g, 4000, 1).unwrap();
        let b = expected_score(&f, &g, 16_000, 2).unwrap();
        let ratio = b.std_error / a.std_error;
        assert!((ratio - 0.5).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn lambda_zero_has_zero_gap() {
        let g = ForecastDistribution::gpd(1.0, 0.25).unwrap();
        let h = ForecastDistribution::gpd(1.0, 0.5).unwrap();
        let rows = mixture_insensitivity_check(&g, &h, &[0.0], 64, 1).unwrap();
        assert_eq!(rows[0].gap, 0.0);
        assert!(rows[0].holds);
        assert!(mixture_insensitivity_check(&g, &h, &[1.0], 64, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn quadrature_matches_ensemble_closed_form(
            members in prop::collection::vec(-5.0f64..5.0, 1..12),
            y in -6.0f64..6.0,
        ) {
            let ens = ForecastDistribution::ensemble(members).unwrap();
            let closed = crps(&ens, y).unwrap();
            let quad = crps_quadrature(&ens, y).unwrap();
            prop_assert!((closed - quad).abs() < 1e-6, "{closed} vs {quad}");
        }

        #[test]
        fn crps_is_nonnegative(mu in -3.0f64..3.0, sigma in 0.1f64..4.0, y in -20.0f64..20.0) {
            let n = ForecastDistribution::normal(mu, sigma).unwrap();
            prop_assert!(crps(&n, y).unwrap() >= 0.0);
        }
    }
}
