//! Empirical tail-calibration diagnostics.
//!
//! Everything here is computed from a finite sample of
//! [`ForecastObservationPair`]s. The central object is [`TailSample`], which
//! evaluates every pair once at a threshold (forecast exceedance probability,
//! exceedance indicator, excess PIT) and from which the combined ratio,
//! occurrence ratio, severity curve and binned variants are read off.
//!
//! Conventions:
//!
//! - exceedance is strict, `y > t`;
//! - a threshold of `-inf` gives ordinary PIT values with denominator `n`;
//! - a pair carrying its own threshold uses it instead of the global one, and
//!   the denominator sums `1 - F_i(t_i)` over pairs;
//! - when a forecast has no mass above `t` its excess PIT is exactly 1, so it
//!   only enters the numerator at `u = 1`;
//! - forecasts with atoms use randomized PIT values with uniforms drawn from a
//!   [`PitRandomizer`], deterministic per pair index.

mod binning;
mod marginal;

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dists::{ForecastDistribution, UnivariateDistribution};
use crate::numeric::{self, NeumaierSum};

pub use binning::{binned_combined_ratio, BinPartition, BinnedCurve};
pub use marginal::{marginal_tail_curve, MarginalTailCurve};

/// Denominators below this are treated as zero.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticError {
    #[error("forecast exceedance probabilities sum to {denominator:e} at threshold {threshold}; ratio undefined")]
    DegenerateDenominator { threshold: f64, denominator: f64 },
    #[error("no observation exceeds threshold {threshold}")]
    NoExceedances { threshold: f64 },
    #[error("forecast has atoms, so a randomizing uniform is required for its PIT")]
    MissingRandomizer,
    #[error("no forecast-observation pairs")]
    EmptySample,
    #[error("invalid pair: {0}")]
    InvalidPair(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid bin partition: {0}")]
    InvalidPartition(String),
    #[error("covariate '{name}' missing on pair {index}")]
    MissingCovariate { name: String, index: usize },
    #[error("threshold quantile level {0} is outside (0, 1)")]
    InvalidQuantileLevel(f64),
}

/// Named real covariates attached to a pair, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Covariates(Vec<(Arc<str>, f64)>);

impl Covariates {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.iter().find(|(k, _)| &**k == name).map(|(_, v)| *v)
    }

    /// Sets `name`, replacing an existing value.
    pub fn insert(&mut self, name: impl Into<Arc<str>>, value: f64) {
        let name = name.into();
        match self.0.iter_mut().find(|(k, _)| *k == name) {
            Some(slot) => slot.1 = value,
            None => self.0.push((name, value)),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (&**k, *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One realization `(F_i, y_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastObservationPair {
    pub forecast: ForecastDistribution,
    pub observation: f64,
    pub covariates: Covariates,
    /// Pair-specific threshold, used in place of the global one.
    pub threshold: Option<f64>,
}

impl ForecastObservationPair {
    pub fn new(forecast: ForecastDistribution, observation: f64) -> Result<Self, DiagnosticError> {
        if !observation.is_finite() {
            return Err(DiagnosticError::InvalidPair(format!(
                "observation {observation} is not finite"
            )));
        }
        Ok(Self {
            forecast,
            observation,
            covariates: Covariates::new(),
            threshold: None,
        })
    }

    pub fn with_covariate(mut self, name: impl Into<Arc<str>>, value: f64) -> Self {
        self.covariates.insert(name, value);
        self
    }

    pub fn with_threshold(mut self, t: f64) -> Result<Self, DiagnosticError> {
        if !t.is_finite() {
            return Err(DiagnosticError::InvalidPair(format!("threshold {t} is not finite")));
        }
        self.threshold = Some(t);
        Ok(self)
    }

    fn effective_threshold(&self, t: f64) -> f64 {
        self.threshold.unwrap_or(t)
    }
}

/// Source of the uniforms used for randomized PIT values. The uniform for
/// pair `i` depends only on the seed and `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PitRandomizer {
    pub seed: u64,
}

impl PitRandomizer {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn uniform(&self, index: usize) -> f64 {
        numeric::substream(self.seed, index as u64).random()
    }
}

/// Excess PIT `z = F_t(y - t)`, or `None` when `y <= t`.
///
/// `v` is the randomizing uniform, required when the forecast has atoms.
/// With `t = -inf` this is the ordinary (randomized) PIT.
pub fn excess_pit(
    pair: &ForecastObservationPair,
    t: f64,
    v: Option<f64>,
) -> Result<Option<f64>, DiagnosticError> {
    let t = pair.effective_threshold(t);
    let y = pair.observation;
    if y <= t {
        return Ok(None);
    }
    let f = &pair.forecast;
    let continuous = f.is_continuous();
    if !continuous && v.is_none() {
        return Err(DiagnosticError::MissingRandomizer);
    }
    let (upper, lower) = if t == f64::NEG_INFINITY {
        (f.cdf(y), f.cdf_left_limit(y))
    } else {
        let tail = f.sf(t);
        if !(tail > 0.0) {
            return Ok(Some(1.0));
        }
        // Survival form keeps precision deep in the tail.
        let upper = 1.0 - f.sf(y) / tail;
        let lower = if continuous { upper } else { 1.0 - f.sf_left_limit(y) / tail };
        (upper.clamp(0.0, 1.0), lower.clamp(0.0, 1.0))
    };
    if continuous {
        return Ok(Some(upper));
    }
    let v = v.expect("checked above");
    Ok(Some(lower + v * (upper - lower)))
}

/// `P_F(Y > t)` for the pair's forecast at its effective threshold.
fn exceedance_probability(pair: &ForecastObservationPair, t: f64) -> f64 {
    let t = pair.effective_threshold(t);
    if t == f64::NEG_INFINITY {
        1.0
    } else {
        pair.forecast.sf(t)
    }
}

/// Per-pair evaluation of a sample at one threshold.
#[derive(Debug, Clone)]
pub struct TailSample {
    threshold: f64,
    survival: Vec<f64>,
    pits: Vec<Option<f64>>,
    sorted_pits: Vec<f64>,
    denominator: f64,
}

impl TailSample {
    /// Evaluates every pair at threshold `t` (pairs with their own threshold
    /// use it instead).
    pub fn new(
        pairs: &[ForecastObservationPair],
        t: f64,
        randomizer: &PitRandomizer,
    ) -> Result<Self, DiagnosticError> {
        if pairs.is_empty() {
            return Err(DiagnosticError::EmptySample);
        }
        if t.is_nan() || t == f64::INFINITY {
            return Err(DiagnosticError::InvalidGrid(format!("threshold {t} is not usable")));
        }
        let evaluated: Vec<(f64, Option<f64>)> = pairs
            .par_iter()
            .enumerate()
            .map(|(i, pair)| {
                let survival = exceedance_probability(pair, t);
                let v = if pair.forecast.is_continuous() {
                    None
                } else {
                    Some(randomizer.uniform(i))
                };
                excess_pit(pair, t, v).map(|z| (survival, z))
            })
            .collect::<Result<_, _>>()?;
        let (survival, pits): (Vec<f64>, Vec<Option<f64>>) = evaluated.into_iter().unzip();
        let denominator = numeric::sum(survival.iter().copied());
        let mut sorted_pits: Vec<f64> = pits.iter().flatten().copied().collect();
        sorted_pits.sort_by(f64::total_cmp);
        Ok(Self {
            threshold: t,
            survival,
            pits,
            sorted_pits,
            denominator,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn n(&self) -> usize {
        self.survival.len()
    }

    pub fn n_exceedances(&self) -> usize {
        self.sorted_pits.len()
    }

    /// `1 - F_i(t_i)` per pair.
    pub fn survival(&self) -> &[f64] {
        &self.survival
    }

    /// Excess PIT per pair, `None` for non-exceedances.
    pub fn pits(&self) -> &[Option<f64>] {
        &self.pits
    }

    /// Excess PIT values of the exceedances, ascending.
    pub fn sorted_pits(&self) -> &[f64] {
        &self.sorted_pits
    }

    /// `Σ (1 - F_i(t_i))`.
    pub fn denominator(&self) -> f64 {
        self.denominator
    }

    fn check_denominator(&self) -> Result<(), DiagnosticError> {
        if self.denominator < DEGENERATE_DENOMINATOR {
            Err(DiagnosticError::DegenerateDenominator {
                threshold: self.threshold,
                denominator: self.denominator,
            })
        } else {
            Ok(())
        }
    }

    /// Number of exceedances with excess PIT `<= u`.
    pub fn count_below(&self, u: f64) -> usize {
        self.sorted_pits.partition_point(|&z| z <= u)
    }

    pub fn occurrence_ratio(&self) -> Result<f64, DiagnosticError> {
        self.check_denominator()?;
        Ok(self.n_exceedances() as f64 / self.denominator)
    }

    pub fn combined_ratio(&self, u: f64) -> Result<f64, DiagnosticError> {
        self.check_denominator()?;
        Ok(self.count_below(u) as f64 / self.denominator)
    }

    pub fn severity(&self, u: f64) -> Result<f64, DiagnosticError> {
        if self.sorted_pits.is_empty() {
            return Err(DiagnosticError::NoExceedances {
                threshold: self.threshold,
            });
        }
        Ok(self.count_below(u) as f64 / self.n_exceedances() as f64)
    }

    pub fn combined_curve(&self, u_grid: &[f64]) -> Result<DiagnosticCurve, DiagnosticError> {
        check_u_grid(u_grid)?;
        self.check_denominator()?;
        let values = u_grid
            .iter()
            .map(|&u| self.count_below(u) as f64 / self.denominator)
            .collect();
        Ok(self.curve(CurveKind::Combined, u_grid, values))
    }

    pub fn severity_curve(&self, u_grid: &[f64]) -> Result<DiagnosticCurve, DiagnosticError> {
        check_u_grid(u_grid)?;
        let n_t = self.n_exceedances();
        if n_t == 0 {
            return Err(DiagnosticError::NoExceedances {
                threshold: self.threshold,
            });
        }
        let values = u_grid
            .iter()
            .map(|&u| self.count_below(u) as f64 / n_t as f64)
            .collect();
        Ok(self.curve(CurveKind::Severity, u_grid, values))
    }

    fn curve(&self, kind: CurveKind, grid: &[f64], values: Vec<f64>) -> DiagnosticCurve {
        DiagnosticCurve {
            kind,
            threshold: self.threshold,
            grid: grid.to_vec(),
            values,
            band: None,
            n_exceedances: self.n_exceedances(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Combined,
    Severity,
    Marginal,
}

/// A diagnostic evaluated on a grid of `u` values (or excess sizes `x` for
/// marginal curves), with an optional pointwise band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticCurve {
    pub kind: CurveKind,
    pub threshold: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub band: Option<Vec<(f64, f64)>>,
    pub n_exceedances: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Occurrence,
    SupDistance,
}

/// A scalar diagnostic over a grid of thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSeries {
    pub kind: SeriesKind,
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
    pub band: Option<Vec<(f64, f64)>>,
    pub n_exceedances: Vec<usize>,
}

/// `{0, 0.01, ..., 1}`.
pub fn default_u_grid() -> Vec<f64> {
    uniform_grid(101)
}

/// `points` equispaced values from 0 to 1 inclusive.
pub fn uniform_grid(points: usize) -> Vec<f64> {
    let steps = points.saturating_sub(1).max(1) as f64;
    (0..points).map(|i| i as f64 / steps).collect()
}

fn check_u_grid(grid: &[f64]) -> Result<(), DiagnosticError> {
    if grid.is_empty() {
        return Err(DiagnosticError::InvalidGrid("grid is empty".into()));
    }
    if grid.iter().any(|u| !(0.0..=1.0).contains(u)) {
        return Err(DiagnosticError::InvalidGrid("grid values must lie in [0, 1]".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DiagnosticError::InvalidGrid("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// A threshold given directly or as an empirical quantile level of the
/// observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSpec {
    Value(f64),
    Quantile(f64),
}

/// Resolves threshold specs to values; quantile levels use the linearly
/// interpolated empirical quantile of the observations.
pub fn resolve_thresholds(
    pairs: &[ForecastObservationPair],
    specs: &[ThresholdSpec],
) -> Result<Vec<f64>, DiagnosticError> {
    let mut sorted: Option<Vec<f64>> = None;
    specs
        .iter()
        .map(|spec| match *spec {
            ThresholdSpec::Value(t) => Ok(t),
            ThresholdSpec::Quantile(level) => {
                if !(level > 0.0 && level < 1.0) {
                    return Err(DiagnosticError::InvalidQuantileLevel(level));
                }
                if pairs.is_empty() {
                    return Err(DiagnosticError::EmptySample);
                }
                let sorted = sorted.get_or_insert_with(|| {
                    let mut ys: Vec<f64> = pairs.iter().map(|p| p.observation).collect();
                    ys.sort_by(f64::total_cmp);
                    ys
                });
                Ok(numeric::empirical_quantile(sorted, level))
            }
        })
        .collect()
}

/// Combined ratio `Σ_{y_i > t} 1{z_i <= u} / Σ (1 - F_i(t))` on `u_grid`.
pub fn combined_ratio_curve(
    pairs: &[ForecastObservationPair],
    t: f64,
    u_grid: &[f64],
) -> Result<DiagnosticCurve, DiagnosticError> {
    TailSample::new(pairs, t, &PitRandomizer::default())?.combined_curve(u_grid)
}

/// Empirical cdf of the excess PIT values of the exceedances on `u_grid`.
pub fn severity_pp_curve(
    pairs: &[ForecastObservationPair],
    t: f64,
    u_grid: &[f64],
) -> Result<DiagnosticCurve, DiagnosticError> {
    TailSample::new(pairs, t, &PitRandomizer::default())?.severity_curve(u_grid)
}

/// Streaming accumulator for the occurrence ratio, mergeable across chunks.
#[derive(Debug, Clone, Default)]
pub struct OccurrenceCounts {
    pub n: u64,
    pub exceedances: u64,
    survival: NeumaierSum,
}

impl OccurrenceCounts {
    pub fn push(&mut self, forecast_survival: f64, exceeded: bool) {
        self.n += 1;
        self.exceedances += u64::from(exceeded);
        self.survival.add(forecast_survival);
    }

    pub fn merge(&mut self, other: &OccurrenceCounts) {
        self.n += other.n;
        self.exceedances += other.exceedances;
        self.survival.merge(&other.survival);
    }

    pub fn denominator(&self) -> f64 {
        self.survival.value()
    }

    pub fn ratio(&self, threshold: f64) -> Result<f64, DiagnosticError> {
        let denominator = self.denominator();
        if denominator < DEGENERATE_DENOMINATOR {
            return Err(DiagnosticError::DegenerateDenominator { threshold, denominator });
        }
        Ok(self.exceedances as f64 / denominator)
    }
}

fn occurrence_counts(pairs: &[ForecastObservationPair], t: f64) -> OccurrenceCounts {
    let survival: Vec<f64> = pairs.par_iter().map(|p| exceedance_probability(p, t)).collect();
    let mut counts = OccurrenceCounts::default();
    for (pair, s) in pairs.iter().zip(survival) {
        counts.push(s, pair.observation > pair.effective_threshold(t));
    }
    counts
}

/// Occurrence ratio `Σ 1{y_i > t} / Σ (1 - F_i(t))`.
pub fn occurrence_ratio(pairs: &[ForecastObservationPair], t: f64) -> Result<f64, DiagnosticError> {
    if pairs.is_empty() {
        return Err(DiagnosticError::EmptySample);
    }
    occurrence_counts(pairs, t).ratio(t)
}

/// Occurrence ratio on a threshold grid.
pub fn occurrence_ratio_series(
    pairs: &[ForecastObservationPair],
    thresholds: &[f64],
) -> Result<RatioSeries, DiagnosticError> {
    if pairs.is_empty() {
        return Err(DiagnosticError::EmptySample);
    }
    let mut values = Vec::with_capacity(thresholds.len());
    let mut n_exceedances = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let counts = occurrence_counts(pairs, t);
        values.push(counts.ratio(t)?);
        n_exceedances.push(counts.exceedances as usize);
    }
    Ok(RatioSeries {
        kind: SeriesKind::Occurrence,
        thresholds: thresholds.to_vec(),
        values,
        band: None,
        n_exceedances,
    })
}

/// `max_u |R(u) - u|` over the curve's grid.
pub fn sup_distance(curve: &DiagnosticCurve) -> f64 {
    curve
        .grid
        .iter()
        .zip(&curve.values)
        .map(|(u, v)| (v - u).abs())
        .fold(0.0, f64::max)
}

/// Sup distance of the combined ratio on a threshold grid.
pub fn sup_distance_series(
    pairs: &[ForecastObservationPair],
    thresholds: &[f64],
    u_grid: &[f64],
    randomizer: &PitRandomizer,
) -> Result<RatioSeries, DiagnosticError> {
    let mut values = Vec::with_capacity(thresholds.len());
    let mut n_exceedances = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let sample = TailSample::new(pairs, t, randomizer)?;
        values.push(sup_distance(&sample.combined_curve(u_grid)?));
        n_exceedances.push(sample.n_exceedances());
    }
    Ok(RatioSeries {
        kind: SeriesKind::SupDistance,
        thresholds: thresholds.to_vec(),
        values,
        band: None,
        n_exceedances,
    })
}
