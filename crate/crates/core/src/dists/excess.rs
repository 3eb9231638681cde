//! Conditional excess distributions `F_t(x) = (F(t + x) - F(t)) / (1 - F(t))`.

use super::{DistError, ForecastDistribution, Support, UnivariateDistribution};

/// The forecast excess distribution over a threshold.
///
/// When the parent puts no mass above `t` the excess distribution is
/// identically one on `[0, ∞)` (a point mass at zero) and
/// [`is_degenerate`](Self::is_degenerate) is set.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcessDistribution {
    parent: ForecastDistribution,
    threshold: f64,
    tail_mass: f64,
}

impl ExcessDistribution {
    pub fn new(parent: ForecastDistribution, threshold: f64) -> Self {
        let tail_mass = parent.sf(threshold);
        Self {
            parent,
            threshold,
            tail_mass,
        }
    }

    pub fn parent(&self) -> &ForecastDistribution {
        &self.parent
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// `1 - F(t)`.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.tail_mass > 0.0)
    }
}

impl UnivariateDistribution for ExcessDistribution {
    fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else if self.is_degenerate() {
            1.0
        } else {
            (1.0 - self.parent.sf(self.threshold + x) / self.tail_mass).clamp(0.0, 1.0)
        }
    }

    fn cdf_left_limit(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if self.is_degenerate() {
            1.0
        } else {
            (1.0 - self.parent.sf_left_limit(self.threshold + x) / self.tail_mass).clamp(0.0, 1.0)
        }
    }

    fn sf(&self, x: f64) -> f64 {
        if x < 0.0 {
            1.0
        } else if self.is_degenerate() {
            0.0
        } else {
            (self.parent.sf(self.threshold + x) / self.tail_mass).clamp(0.0, 1.0)
        }
    }

    fn sf_left_limit(&self, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else if self.is_degenerate() {
            0.0
        } else {
            (self.parent.sf_left_limit(self.threshold + x) / self.tail_mass).clamp(0.0, 1.0)
        }
    }

    fn quantile(&self, u: f64) -> Result<f64, DistError> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(DistError::ProbabilityOutOfRange(u));
        }
        if self.is_degenerate() {
            return Ok(0.0);
        }
        // F(t + x) >= F(t) + u (1 - F(t))
        let level = (1.0 - self.tail_mass * (1.0 - u)).min(1.0);
        if level <= 0.0 {
            return Ok(0.0);
        }
        let x = self.parent.quantile(level)? - self.threshold;
        Ok(x.max(0.0))
    }

    fn support(&self) -> Support {
        if self.is_degenerate() {
            return Support { lower: 0.0, upper: 0.0 };
        }
        let upper = self.parent.support().upper - self.threshold;
        Support {
            lower: 0.0,
            upper: upper.max(0.0),
        }
    }

    fn atoms(&self) -> Vec<f64> {
        if self.is_degenerate() {
            return vec![0.0];
        }
        self.parent
            .atoms()
            .into_iter()
            .filter(|&a| a > self.threshold)
            .map(|a| a - self.threshold)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exponential_is_memoryless() {
        let f = ForecastDistribution::exponential(1.0).unwrap().excess_distribution(2.0);
        for x in [0.0, 0.3, 1.0, 4.0] {
            assert!((f.cdf(x) - (1.0 - (-x).exp())).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_excess_is_linear() {
        let f = ForecastDistribution::uniform(0.0, 1.0).unwrap().excess_distribution(0.5);
        for x in [0.0, 0.1, 0.25, 0.5, 0.9] {
            assert!((f.cdf(x) - (2.0 * x).min(1.0)).abs() < 1e-15);
        }
        assert!(!f.is_degenerate());
        assert_eq!(f.support(), Support { lower: 0.0, upper: 0.5 });
    }

    #[test]
    fn above_support_is_degenerate() {
        let f = ForecastDistribution::uniform(0.0, 1.0).unwrap().excess_distribution(2.0);
        assert!(f.is_degenerate());
        for x in [0.0, 0.5, 10.0] {
            assert_eq!(f.cdf(x), 1.0);
        }
        assert_eq!(f.cdf_left_limit(0.0), 0.0);
        assert_eq!(f.quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn ensemble_excess_keeps_atoms() {
        let f = ForecastDistribution::ensemble(vec![1.0, 2.0, 3.0]).unwrap().excess_distribution(0.5);
        assert_eq!(f.atoms(), vec![0.5, 1.5, 2.5]);
        assert!((f.cdf_left_limit(1.5) - 1.0 / 3.0).abs() < 1e-15);
        assert!((f.cdf(1.5) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.quantile(0.5).unwrap(), 1.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn gpd_threshold_stability(sigma in 0.1..5.0f64, xi in -0.5..1.5f64, level in 0.0..0.999f64, x in 0.0..50.0f64) {
            let parent = ForecastDistribution::gpd(sigma, xi).unwrap();
            let t = parent.quantile(level.max(1e-12)).unwrap();
            let excess = parent.excess_distribution(t);
            let stable = ForecastDistribution::gpd(sigma + xi * t, xi).unwrap();
            prop_assert!((excess.cdf(x) - stable.cdf(x)).abs() < 1e-12,
                "sigma={sigma} xi={xi} t={t} x={x}: {} vs {}", excess.cdf(x), stable.cdf(x));
        }

        #[test]
        fn excess_quantile_is_generalized_inverse(mu in -2.0..2.0f64, t in -3.0..3.0f64, u in 0.001..1.0f64) {
            let f = ForecastDistribution::normal(mu, 1.0).unwrap().excess_distribution(t);
            let x = f.quantile(u).unwrap();
            prop_assert!(f.cdf(x) >= u - 1e-9);
        }
    }
}
