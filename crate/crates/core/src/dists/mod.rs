//! Forecast distributions.
//!
//! [`ForecastDistribution`] is a closed set of parametric families, wrappers
//! (shift, scale, censoring, splicing), mixtures and empirical ensembles, all
//! exposing the same semantics:
//!
//! - `cdf` is right-continuous, `cdf_left_limit` is its left limit;
//! - `quantile` is the generalized inverse `inf { x : F(x) >= u }` on `(0, 1]`;
//! - `sample` is inversion sampling through `quantile`.
//!
//! Every value is immutable after construction and cheap to clone (composite
//! members are reference counted), so forecasts can be shared freely across
//! threads.

mod excess;
mod grammar;
pub mod special;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use excess::ExcessDistribution;
pub use grammar::ParseError;

/// Below this magnitude the GPD/GEV shape is treated as exactly zero.
pub const SHAPE_ZERO_CUTOFF: f64 = 1e-8;

const MIXTURE_WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("invalid parameter for {family}: {message}")]
    InvalidParameter { family: Family, message: String },
    #[error("probability {0} is outside (0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

fn invalid(family: Family, message: impl Into<String>) -> DistError {
    DistError::InvalidParameter {
        family,
        message: message.into(),
    }
}

/// Family tag of a [`ForecastDistribution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Normal,
    Uniform,
    Exponential,
    Gamma,
    Logistic,
    Gpd,
    Gev,
    Ensemble,
    Mixture,
    Shifted,
    Scaled,
    CensoredBelow,
    Piecewise,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::Uniform => "uniform",
            Family::Exponential => "exponential",
            Family::Gamma => "gamma",
            Family::Logistic => "logistic",
            Family::Gpd => "gpd",
            Family::Gev => "gev",
            Family::Ensemble => "ensemble",
            Family::Mixture => "mixture",
            Family::Shifted => "shifted",
            Family::Scaled => "scaled",
            Family::CensoredBelow => "censored_below",
            Family::Piecewise => "piecewise",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Support bounds `[lower, upper]` on the extended real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Support {
    pub lower: f64,
    pub upper: f64,
}

/// Common interface of univariate distributions evaluated by the diagnostics
/// and the scoring code.
pub trait UnivariateDistribution {
    /// `P(X <= x)`.
    fn cdf(&self, x: f64) -> f64;
    /// `P(X < x)`.
    fn cdf_left_limit(&self, x: f64) -> f64;
    /// `P(X > x)`; overridden where `1 - cdf` would lose precision.
    fn sf(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }
    /// `P(X >= x)`.
    fn sf_left_limit(&self, x: f64) -> f64 {
        1.0 - self.cdf_left_limit(x)
    }
    /// Generalized inverse `inf { x : F(x) >= u }` for `u` in `(0, 1]`.
    fn quantile(&self, u: f64) -> Result<f64, DistError>;
    fn support(&self) -> Support;
    /// Locations carrying positive probability mass, in increasing order.
    fn atoms(&self) -> Vec<f64>;
    fn is_continuous(&self) -> bool {
        self.atoms().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Normal { mu: f64, sigma: f64 },
    Uniform { lower: f64, upper: f64 },
    Exponential { rate: f64 },
    Gamma { shape: f64, scale: f64, ln_gamma_shape: f64 },
    Logistic { mu: f64, s: f64 },
    Gpd { sigma: f64, xi: f64 },
    Gev { mu: f64, sigma: f64, xi: f64 },
    /// Members sorted ascending.
    Ensemble(Arc<[f64]>),
    Mixture(Arc<[(f64, ForecastDistribution)]>),
    Shifted(Arc<ForecastDistribution>, f64),
    Scaled(Arc<ForecastDistribution>, f64),
    CensoredBelow(Arc<ForecastDistribution>, f64),
    Piecewise(Arc<(ForecastDistribution, ForecastDistribution)>, f64),
}

/// A forecast distribution `F`. See the module docs for the semantics.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastDistribution {
    kind: Kind,
}

fn check_finite(family: Family, name: &str, value: f64) -> Result<(), DistError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(invalid(family, format!("{name} must be finite, got {value}")))
    }
}

fn check_positive(family: Family, name: &str, value: f64) -> Result<(), DistError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(family, format!("{name} must be positive and finite, got {value}")))
    }
}

fn check_probability(u: f64) -> Result<(), DistError> {
    if u > 0.0 && u <= 1.0 {
        Ok(())
    } else {
        Err(DistError::ProbabilityOutOfRange(u))
    }
}

impl ForecastDistribution {
    pub fn normal(mu: f64, sigma: f64) -> Result<Self, DistError> {
        check_finite(Family::Normal, "mu", mu)?;
        check_positive(Family::Normal, "sigma", sigma)?;
        Ok(Self { kind: Kind::Normal { mu, sigma } })
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self, DistError> {
        check_finite(Family::Uniform, "lower", lower)?;
        check_finite(Family::Uniform, "upper", upper)?;
        if !(lower < upper) {
            return Err(invalid(Family::Uniform, "lower must be below upper"));
        }
        Ok(Self { kind: Kind::Uniform { lower, upper } })
    }

    pub fn exponential(rate: f64) -> Result<Self, DistError> {
        check_positive(Family::Exponential, "rate", rate)?;
        Ok(Self { kind: Kind::Exponential { rate } })
    }

    /// Gamma distribution with the given shape and scale (mean `shape * scale`).
    pub fn gamma(shape: f64, scale: f64) -> Result<Self, DistError> {
        check_positive(Family::Gamma, "shape", shape)?;
        check_positive(Family::Gamma, "scale", scale)?;
        Ok(Self {
            kind: Kind::Gamma {
                shape,
                scale,
                ln_gamma_shape: special::ln_gamma(shape),
            },
        })
    }

    pub fn logistic(mu: f64, s: f64) -> Result<Self, DistError> {
        check_finite(Family::Logistic, "mu", mu)?;
        check_positive(Family::Logistic, "s", s)?;
        Ok(Self { kind: Kind::Logistic { mu, s } })
    }

    /// Generalized Pareto distribution on `[0, ∞)` (or `[0, -sigma/xi]` for
    /// negative shape), with survival function `(1 + xi x / sigma)^(-1/xi)`.
    pub fn gpd(sigma: f64, xi: f64) -> Result<Self, DistError> {
        check_positive(Family::Gpd, "sigma", sigma)?;
        check_finite(Family::Gpd, "xi", xi)?;
        Ok(Self { kind: Kind::Gpd { sigma, xi } })
    }

    /// Generalized extreme value distribution, `exp(-(1 + xi z)^(-1/xi))`.
    pub fn gev(mu: f64, sigma: f64, xi: f64) -> Result<Self, DistError> {
        check_finite(Family::Gev, "mu", mu)?;
        check_positive(Family::Gev, "sigma", sigma)?;
        check_finite(Family::Gev, "xi", xi)?;
        Ok(Self { kind: Kind::Gev { mu, sigma, xi } })
    }

    /// Empirical distribution of the ensemble members, each with mass `1/m`.
    pub fn ensemble(members: impl Into<Vec<f64>>) -> Result<Self, DistError> {
        let mut members = members.into();
        if members.is_empty() {
            return Err(invalid(Family::Ensemble, "ensemble needs at least one member"));
        }
        if let Some(bad) = members.iter().find(|x| !x.is_finite()) {
            return Err(invalid(Family::Ensemble, format!("member {bad} is not finite")));
        }
        members.sort_by(f64::total_cmp);
        Ok(Self { kind: Kind::Ensemble(members.into()) })
    }

    /// Finite mixture `Σ w_k F_k`; weights are nonnegative and sum to one.
    pub fn mixture(components: Vec<(f64, ForecastDistribution)>) -> Result<Self, DistError> {
        if components.is_empty() {
            return Err(invalid(Family::Mixture, "mixture needs at least one component"));
        }
        let mut total = 0.0;
        for (w, _) in &components {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(invalid(Family::Mixture, format!("weight {w} must be nonnegative")));
            }
            total += w;
        }
        if (total - 1.0).abs() > MIXTURE_WEIGHT_TOLERANCE {
            return Err(invalid(Family::Mixture, format!("weights sum to {total}, not 1")));
        }
        Ok(Self { kind: Kind::Mixture(components.into()) })
    }

    /// Two-component mixture `lambda * a + (1 - lambda) * b`.
    pub fn mixture2(lambda: f64, a: ForecastDistribution, b: ForecastDistribution) -> Result<Self, DistError> {
        Self::mixture(vec![(lambda, a), (1.0 - lambda, b)])
    }

    /// Law of `X + by` for `X ~ base`.
    pub fn shifted(base: ForecastDistribution, by: f64) -> Result<Self, DistError> {
        check_finite(Family::Shifted, "by", by)?;
        Ok(Self { kind: Kind::Shifted(Arc::new(base), by) })
    }

    /// Law of `by * X` for `X ~ base`, `by > 0`.
    pub fn scaled(base: ForecastDistribution, by: f64) -> Result<Self, DistError> {
        check_positive(Family::Scaled, "by", by)?;
        Ok(Self { kind: Kind::Scaled(Arc::new(base), by) })
    }

    /// Law of `max(X, at)`: an atom of mass `base.cdf(at)` at `at`, equal to
    /// `base` above it.
    pub fn censored_below(base: ForecastDistribution, at: f64) -> Result<Self, DistError> {
        check_finite(Family::CensoredBelow, "at", at)?;
        Ok(Self { kind: Kind::CensoredBelow(Arc::new(base), at) })
    }

    /// Spliced cdf: `below.cdf(x)` for `x < at` and `above.cdf(x)` for `x >= at`.
    pub fn piecewise(below: ForecastDistribution, above: ForecastDistribution, at: f64) -> Result<Self, DistError> {
        check_finite(Family::Piecewise, "at", at)?;
        let left = below.cdf_left_limit(at);
        let right = above.cdf(at);
        if left > right + 1e-12 {
            return Err(invalid(
                Family::Piecewise,
                format!("cdf decreases across the splice at {at}: {left} > {right}"),
            ));
        }
        Ok(Self { kind: Kind::Piecewise(Arc::new((below, above)), at) })
    }

    pub fn family(&self) -> Family {
        match &self.kind {
            Kind::Normal { .. } => Family::Normal,
            Kind::Uniform { .. } => Family::Uniform,
            Kind::Exponential { .. } => Family::Exponential,
            Kind::Gamma { .. } => Family::Gamma,
            Kind::Logistic { .. } => Family::Logistic,
            Kind::Gpd { .. } => Family::Gpd,
            Kind::Gev { .. } => Family::Gev,
            Kind::Ensemble(_) => Family::Ensemble,
            Kind::Mixture(_) => Family::Mixture,
            Kind::Shifted(..) => Family::Shifted,
            Kind::Scaled(..) => Family::Scaled,
            Kind::CensoredBelow(..) => Family::CensoredBelow,
            Kind::Piecewise(..) => Family::Piecewise,
        }
    }

    /// Sorted ensemble members, if this is an ensemble.
    pub fn ensemble_members(&self) -> Option<&[f64]> {
        match &self.kind {
            Kind::Ensemble(members) => Some(members),
            _ => None,
        }
    }

    /// Weighted components, if this is a mixture.
    pub fn mixture_components(&self) -> Option<&[(f64, ForecastDistribution)]> {
        match &self.kind {
            Kind::Mixture(components) => Some(components),
            _ => None,
        }
    }

    /// Whether `E|X|` is finite. Heavy-tailed GPD/GEV shapes (`xi >= 1`)
    /// anywhere in the tree make it infinite.
    pub fn has_finite_mean(&self) -> bool {
        match &self.kind {
            Kind::Gpd { xi, .. } | Kind::Gev { xi, .. } => *xi < 1.0,
            Kind::Mixture(components) => components
                .iter()
                .all(|(w, d)| *w == 0.0 || d.has_finite_mean()),
            Kind::Shifted(base, _) | Kind::Scaled(base, _) | Kind::CensoredBelow(base, _) => {
                base.has_finite_mean()
            }
            Kind::Piecewise(parts, _) => parts.0.has_finite_mean() && parts.1.has_finite_mean(),
            _ => true,
        }
    }

    /// Inversion sampling: one uniform draw from `rng`, mapped through
    /// `quantile`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                return self.quantile_unchecked(u);
            }
        }
    }

    /// Conditional excess distribution `F_t` over the threshold `t`.
    pub fn excess_distribution(&self, t: f64) -> ExcessDistribution {
        ExcessDistribution::new(self.clone(), t)
    }

    /// Parse the `family(key=value, ...)` text form.
    pub fn parse(text: &str) -> Result<Self, DistError> {
        grammar::parse(text)
    }

    fn quantile_unchecked(&self, u: f64) -> f64 {
        match &self.kind {
            Kind::Normal { mu, sigma } => mu + sigma * special::normal_quantile(u),
            Kind::Uniform { lower, upper } => {
                if u >= 1.0 {
                    *upper
                } else {
                    lower + u * (upper - lower)
                }
            }
            Kind::Exponential { rate } => -(-u).ln_1p() / rate,
            Kind::Gamma {
                shape,
                scale,
                ln_gamma_shape,
            } => scale * special::gamma_p_inv(*shape, u, *ln_gamma_shape),
            Kind::Logistic { mu, s } => {
                if u >= 1.0 {
                    f64::INFINITY
                } else {
                    mu + s * (u / (1.0 - u)).ln()
                }
            }
            Kind::Gpd { sigma, xi } => {
                if u >= 1.0 {
                    return if *xi < 0.0 && xi.abs() >= SHAPE_ZERO_CUTOFF {
                        -sigma / xi
                    } else {
                        f64::INFINITY
                    };
                }
                let log_survival = (-u).ln_1p();
                if xi.abs() < SHAPE_ZERO_CUTOFF {
                    -sigma * log_survival
                } else {
                    sigma * (-xi * log_survival).exp_m1() / xi
                }
            }
            Kind::Gev { mu, sigma, xi } => {
                if u >= 1.0 {
                    return if *xi < 0.0 && xi.abs() >= SHAPE_ZERO_CUTOFF {
                        mu - sigma / xi
                    } else {
                        f64::INFINITY
                    };
                }
                let neg_log_u = -u.ln();
                if xi.abs() < SHAPE_ZERO_CUTOFF {
                    mu - sigma * neg_log_u.ln()
                } else {
                    mu + sigma * (-xi * neg_log_u.ln()).exp_m1() / xi
                }
            }
            Kind::Ensemble(members) => {
                let m = members.len();
                let mut k = (u * m as f64).ceil() as usize;
                k = k.clamp(1, m);
                // Guard against `u * m` landing just above an integer.
                while k > 1 && (k - 1) as f64 / m as f64 >= u {
                    k -= 1;
                }
                members[k - 1]
            }
            Kind::Mixture(components) => {
                let quantiles = components
                    .iter()
                    .filter(|(w, _)| *w > 0.0)
                    .map(|(_, d)| d.quantile_unchecked(u));
                let (lo, hi) = quantiles.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| {
                    (lo.min(q), hi.max(q))
                });
                if u >= 1.0 {
                    return hi;
                }
                invert_by_bisection(|x| self.cdf(x), u, lo, hi)
            }
            Kind::Shifted(base, by) => self.snap_quantile(base.quantile_unchecked(u) + by, u),
            Kind::Scaled(base, by) => self.snap_quantile(base.quantile_unchecked(u) * by, u),
            Kind::CensoredBelow(base, at) => {
                if u <= base.cdf(*at) {
                    *at
                } else {
                    base.quantile_unchecked(u).max(*at)
                }
            }
            Kind::Piecewise(parts, at) => {
                let below = parts.0.quantile_unchecked(u);
                if below < *at {
                    below
                } else {
                    parts.1.quantile_unchecked(u).max(*at)
                }
            }
        }
    }
}

impl ForecastDistribution {
    /// Moves a transformed quantile to the smallest nearby float with
    /// `cdf(x) >= u`. Shifting or scaling the base quantile rounds, and a
    /// steep cdf can change by more than the tolerance across one float.
    fn snap_quantile(&self, mut x: f64, u: f64) -> f64 {
        const MAX_STEPS: usize = 64;
        if !x.is_finite() {
            return x;
        }
        for _ in 0..MAX_STEPS {
            if self.cdf(x) >= u {
                break;
            }
            x = x.next_up();
        }
        for _ in 0..MAX_STEPS {
            let below = x.next_down();
            if self.cdf(below) < u {
                break;
            }
            x = below;
        }
        x
    }
}

/// Smallest `x` in `[lo, hi]` with `cdf(x) >= u`, to floating-point
/// resolution. Requires `cdf(x) < u` for `x < lo` and `cdf(hi) >= u`.
fn invert_by_bisection(cdf: impl Fn(f64) -> f64, u: f64, mut lo: f64, mut hi: f64) -> f64 {
    if cdf(lo) >= u {
        return lo;
    }
    for _ in 0..2_000 {
        let mid = if lo.is_finite() && hi.is_finite() {
            lo + 0.5 * (hi - lo)
        } else {
            break;
        };
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid) >= u {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

impl UnivariateDistribution for ForecastDistribution {
    fn cdf(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Normal { mu, sigma } => special::normal_cdf((x - mu) / sigma),
            Kind::Uniform { lower, upper } => ((x - lower) / (upper - lower)).clamp(0.0, 1.0),
            Kind::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Kind::Gamma {
                shape,
                scale,
                ln_gamma_shape,
            } => special::gamma_p(*shape, x / scale, *ln_gamma_shape),
            Kind::Logistic { mu, s } => 1.0 / (1.0 + (-(x - mu) / s).exp()),
            Kind::Gpd { sigma, xi } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -gpd_log_survival(x, *sigma, *xi).exp_m1()
                }
            }
            Kind::Gev { mu, sigma, xi } => (-gev_tail(x, *mu, *sigma, *xi)).exp(),
            Kind::Ensemble(members) => {
                members.partition_point(|&m| m <= x) as f64 / members.len() as f64
            }
            Kind::Mixture(components) => components.iter().map(|(w, d)| w * d.cdf(x)).sum(),
            Kind::Shifted(base, by) => base.cdf(x - by),
            Kind::Scaled(base, by) => base.cdf(x / by),
            Kind::CensoredBelow(base, at) => {
                if x < *at {
                    0.0
                } else {
                    base.cdf(x)
                }
            }
            Kind::Piecewise(parts, at) => {
                if x < *at {
                    parts.0.cdf(x)
                } else {
                    parts.1.cdf(x)
                }
            }
        }
    }

    fn cdf_left_limit(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Ensemble(members) => {
                members.partition_point(|&m| m < x) as f64 / members.len() as f64
            }
            Kind::Mixture(components) => components
                .iter()
                .map(|(w, d)| w * d.cdf_left_limit(x))
                .sum(),
            Kind::Shifted(base, by) => base.cdf_left_limit(x - by),
            Kind::Scaled(base, by) => base.cdf_left_limit(x / by),
            Kind::CensoredBelow(base, at) => {
                if x <= *at {
                    0.0
                } else {
                    base.cdf_left_limit(x)
                }
            }
            Kind::Piecewise(parts, at) => {
                if x <= *at {
                    parts.0.cdf_left_limit(x)
                } else {
                    parts.1.cdf_left_limit(x)
                }
            }
            _ => self.cdf(x),
        }
    }

    fn sf(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Normal { mu, sigma } => special::normal_sf((x - mu) / sigma),
            Kind::Uniform { lower, upper } => ((upper - x) / (upper - lower)).clamp(0.0, 1.0),
            Kind::Exponential { rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            Kind::Gamma {
                shape,
                scale,
                ln_gamma_shape,
            } => special::gamma_q(*shape, x / scale, *ln_gamma_shape),
            Kind::Logistic { mu, s } => 1.0 / (1.0 + ((x - mu) / s).exp()),
            Kind::Gpd { sigma, xi } => {
                if x <= 0.0 {
                    1.0
                } else {
                    gpd_log_survival(x, *sigma, *xi).exp()
                }
            }
            Kind::Gev { mu, sigma, xi } => -(-gev_tail(x, *mu, *sigma, *xi)).exp_m1(),
            Kind::Ensemble(members) => {
                (members.len() - members.partition_point(|&m| m <= x)) as f64 / members.len() as f64
            }
            Kind::Mixture(components) => components.iter().map(|(w, d)| w * d.sf(x)).sum(),
            Kind::Shifted(base, by) => base.sf(x - by),
            Kind::Scaled(base, by) => base.sf(x / by),
            Kind::CensoredBelow(base, at) => {
                if x < *at {
                    1.0
                } else {
                    base.sf(x)
                }
            }
            Kind::Piecewise(parts, at) => {
                if x < *at {
                    parts.0.sf(x)
                } else {
                    parts.1.sf(x)
                }
            }
        }
    }

    fn sf_left_limit(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Ensemble(members) => {
                (members.len() - members.partition_point(|&m| m < x)) as f64 / members.len() as f64
            }
            Kind::Mixture(components) => components
                .iter()
                .map(|(w, d)| w * d.sf_left_limit(x))
                .sum(),
            Kind::Shifted(base, by) => base.sf_left_limit(x - by),
            Kind::Scaled(base, by) => base.sf_left_limit(x / by),
            Kind::CensoredBelow(base, at) => {
                if x <= *at {
                    1.0
                } else {
                    base.sf_left_limit(x)
                }
            }
            Kind::Piecewise(parts, at) => {
                if x <= *at {
                    parts.0.sf_left_limit(x)
                } else {
                    parts.1.sf_left_limit(x)
                }
            }
            _ => self.sf(x),
        }
    }

    fn quantile(&self, u: f64) -> Result<f64, DistError> {
        check_probability(u)?;
        Ok(self.quantile_unchecked(u))
    }

    fn support(&self) -> Support {
        let (lower, upper) = match &self.kind {
            Kind::Normal { .. } | Kind::Logistic { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Kind::Uniform { lower, upper } => (*lower, *upper),
            Kind::Exponential { .. } | Kind::Gamma { .. } => (0.0, f64::INFINITY),
            Kind::Gpd { sigma, xi } => {
                if *xi < 0.0 && xi.abs() >= SHAPE_ZERO_CUTOFF {
                    (0.0, -sigma / xi)
                } else {
                    (0.0, f64::INFINITY)
                }
            }
            Kind::Gev { mu, sigma, xi } => {
                if xi.abs() < SHAPE_ZERO_CUTOFF {
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else if *xi > 0.0 {
                    (mu - sigma / xi, f64::INFINITY)
                } else {
                    (f64::NEG_INFINITY, mu - sigma / xi)
                }
            }
            Kind::Ensemble(members) => (members[0], members[members.len() - 1]),
            Kind::Mixture(components) => components
                .iter()
                .filter(|(w, _)| *w > 0.0)
                .map(|(_, d)| d.support())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                    (lo.min(s.lower), hi.max(s.upper))
                }),
            Kind::Shifted(base, by) => {
                let s = base.support();
                (s.lower + by, s.upper + by)
            }
            Kind::Scaled(base, by) => {
                let s = base.support();
                (s.lower * by, s.upper * by)
            }
            Kind::CensoredBelow(base, at) => {
                let s = base.support();
                (s.lower.max(*at), s.upper.max(*at))
            }
            Kind::Piecewise(parts, at) => {
                let (a, b) = (parts.0.support(), parts.1.support());
                let lower = if a.lower < *at { a.lower } else { b.lower.max(*at) };
                let upper = if b.upper >= *at { b.upper } else { *at };
                (lower, upper)
            }
        };
        Support { lower, upper }
    }

    fn atoms(&self) -> Vec<f64> {
        match &self.kind {
            Kind::Ensemble(members) => {
                let mut atoms = members.to_vec();
                atoms.dedup();
                atoms
            }
            Kind::Mixture(components) => {
                let mut atoms: Vec<f64> = components
                    .iter()
                    .filter(|(w, _)| *w > 0.0)
                    .flat_map(|(_, d)| d.atoms())
                    .collect();
                atoms.sort_by(f64::total_cmp);
                atoms.dedup();
                atoms
            }
            Kind::Shifted(base, by) => base.atoms().into_iter().map(|a| a + by).collect(),
            Kind::Scaled(base, by) => base.atoms().into_iter().map(|a| a * by).collect(),
            Kind::CensoredBelow(base, at) => {
                let mut atoms = Vec::new();
                if base.cdf(*at) > 0.0 {
                    atoms.push(*at);
                }
                atoms.extend(base.atoms().into_iter().filter(|a| a > at));
                atoms
            }
            Kind::Piecewise(parts, at) => {
                let mut atoms: Vec<f64> = parts.0.atoms().into_iter().filter(|a| a < at).collect();
                if parts.1.cdf(*at) > parts.0.cdf_left_limit(*at) {
                    atoms.push(*at);
                }
                atoms.extend(parts.1.atoms().into_iter().filter(|a| a > at));
                atoms
            }
            _ => Vec::new(),
        }
    }

    fn is_continuous(&self) -> bool {
        match &self.kind {
            Kind::Ensemble(_) => false,
            Kind::Mixture(components) => components
                .iter()
                .all(|(w, d)| *w == 0.0 || d.is_continuous()),
            Kind::Shifted(base, _) | Kind::Scaled(base, _) => base.is_continuous(),
            Kind::CensoredBelow(base, at) => base.cdf(*at) == 0.0 && base.is_continuous(),
            Kind::Piecewise(..) => self.atoms().is_empty(),
            _ => true,
        }
    }
}

/// `ln P(X > x)` for the GPD with `x > 0`.
fn gpd_log_survival(x: f64, sigma: f64, xi: f64) -> f64 {
    if xi.abs() < SHAPE_ZERO_CUTOFF {
        return -x / sigma;
    }
    let arg = xi * x / sigma;
    if arg <= -1.0 {
        return f64::NEG_INFINITY;
    }
    -arg.ln_1p() / xi
}

/// The GEV "tail function" `t(x)` with `F(x) = exp(-t(x))`.
fn gev_tail(x: f64, mu: f64, sigma: f64, xi: f64) -> f64 {
    let z = (x - mu) / sigma;
    if xi.abs() < SHAPE_ZERO_CUTOFF {
        return (-z).exp();
    }
    let arg = xi * z;
    if arg <= -1.0 {
        return if xi > 0.0 { f64::INFINITY } else { 0.0 };
    }
    (-arg.ln_1p() / xi).exp()
}

impl fmt::Display for ForecastDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use grammar::Num;
        match &self.kind {
            Kind::Normal { mu, sigma } => write!(f, "normal(mu={}, sigma={})", Num(*mu), Num(*sigma)),
            Kind::Uniform { lower, upper } => {
                write!(f, "uniform(lower={}, upper={})", Num(*lower), Num(*upper))
            }
            Kind::Exponential { rate } => write!(f, "exponential(rate={})", Num(*rate)),
            Kind::Gamma { shape, scale, .. } => {
                write!(f, "gamma(shape={}, scale={})", Num(*shape), Num(*scale))
            }
            Kind::Logistic { mu, s } => write!(f, "logistic(mu={}, s={})", Num(*mu), Num(*s)),
            Kind::Gpd { sigma, xi } => write!(f, "gpd(sigma={}, xi={})", Num(*sigma), Num(*xi)),
            Kind::Gev { mu, sigma, xi } => {
                write!(f, "gev(mu={}, sigma={}, xi={})", Num(*mu), Num(*sigma), Num(*xi))
            }
            Kind::Ensemble(members) => {
                f.write_str("ensemble(")?;
                for (i, m) in members.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{}", Num(*m))?;
                }
                f.write_str(")")
            }
            Kind::Mixture(components) => {
                f.write_str("mixture(")?;
                for (i, (w, d)) in components.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{}, {}", Num(*w), d)?;
                }
                f.write_str(")")
            }
            Kind::Shifted(base, by) => write!(f, "shifted({}, by={})", base, Num(*by)),
            Kind::Scaled(base, by) => write!(f, "scaled({}, by={})", base, Num(*by)),
            Kind::CensoredBelow(base, at) => write!(f, "censored_below({}, at={})", base, Num(*at)),
            Kind::Piecewise(parts, at) => {
                write!(f, "piecewise({}, {}, at={})", parts.0, parts.1, Num(*at))
            }
        }
    }
}

impl std::str::FromStr for ForecastDistribution {
    type Err = DistError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        grammar::parse(s)
    }
}

impl Serialize for ForecastDistribution {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ForecastDistribution {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        grammar::parse(&text).map_err(serde::de::Error::custom)
    }
}
