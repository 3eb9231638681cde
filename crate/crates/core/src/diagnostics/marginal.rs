//! Marginal tail calibration: the empirical excess distribution of the
//! observations against the average forecast excess distribution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{exceedance_probability, DiagnosticError, ForecastObservationPair, DEGENERATE_DENOMINATOR};
use crate::dists::UnivariateDistribution;
use crate::numeric::{self, NeumaierSum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalTailCurve {
    pub threshold: f64,
    /// Excess sizes `x >= 0`.
    pub grid: Vec<f64>,
    /// `#{t < y_i <= t + x} / Σ (1 - F_i(t))`.
    pub observed: Vec<f64>,
    /// Mean over exceedances of `F_{i,t}(x)`.
    pub forecast: Vec<f64>,
    pub sup_distance: f64,
    pub n_exceedances: usize,
}

/// Both sides of the marginal tail calibration condition on `x_grid`.
pub fn marginal_tail_curve(
    pairs: &[ForecastObservationPair],
    t: f64,
    x_grid: &[f64],
) -> Result<MarginalTailCurve, DiagnosticError> {
    if pairs.is_empty() {
        return Err(DiagnosticError::EmptySample);
    }
    if x_grid.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(DiagnosticError::InvalidGrid("excess sizes must be finite and nonnegative".into()));
    }
    let survival: Vec<f64> = pairs.par_iter().map(|p| exceedance_probability(p, t)).collect();
    let denominator = numeric::sum(survival.iter().copied());
    if denominator < DEGENERATE_DENOMINATOR {
        return Err(DiagnosticError::DegenerateDenominator { threshold: t, denominator });
    }
    let exceedances: Vec<usize> = pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| p.observation > p.effective_threshold(t))
        .map(|(i, _)| i)
        .collect();
    if exceedances.is_empty() {
        return Err(DiagnosticError::NoExceedances { threshold: t });
    }
    let mut excesses: Vec<f64> = exceedances
        .iter()
        .map(|&i| pairs[i].observation - pairs[i].effective_threshold(t))
        .collect();
    excesses.sort_by(f64::total_cmp);

    let per_x: Vec<(f64, f64)> = x_grid
        .par_iter()
        .map(|&x| {
            let observed = excesses.partition_point(|&e| e <= x) as f64 / denominator;
            let mut acc = NeumaierSum::new();
            for &i in &exceedances {
                let tail = survival[i];
                let value = if tail > 0.0 {
                    1.0 - pairs[i].forecast.sf(pairs[i].effective_threshold(t) + x) / tail
                } else {
                    1.0
                };
                acc.add(value.clamp(0.0, 1.0));
            }
            (observed, acc.value() / exceedances.len() as f64)
        })
        .collect();
    let (observed, forecast): (Vec<f64>, Vec<f64>) = per_x.into_iter().unzip();
    let sup_distance = observed
        .iter()
        .zip(&forecast)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(MarginalTailCurve {
        threshold: t,
        grid: x_grid.to_vec(),
        observed,
        forecast,
        sup_distance,
        n_exceedances: exceedances.len(),
    })
}
