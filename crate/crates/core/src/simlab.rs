//! Seeded generators for the synthetic forecasters.
//!
//! Each scenario draws latent variables and an observation per index and
//! attaches one or more forecasts built from them. Generation is chunked:
//! indices `k * CHUNK_SIZE ..` are drawn from substream `k` of the seed, so
//! output is identical regardless of how chunks are scheduled.
//!
//! All forecasters of a scenario share a single realization of the latent
//! variables and observations, so comparisons between them are paired.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{Covariates, ForecastObservationPair};
use crate::dists::{DistError, ForecastDistribution};
use crate::numeric::chunked;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// A named scenario with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Scenario {
    /// `Δ ~ Γ(1/γ, scale γ)`, `Y | Δ ~ Exp(Δ)`; ideal `Exp(Δ)`,
    /// climatological `GPD(1, γ)`, extremist `Exp(Δ/ν)`.
    ExponentialTrio { gamma: f64, nu: f64 },
    /// Independent `Δ1, Δ2`; `Y | Δ1 ~ Exp(Δ1)`, forecast `Exp(Δ2)`.
    Misinformed { gamma: f64 },
    /// `Y ~ Exp(1)`, forecast the law of `Y + log((2 + τ)/2)`, `τ = ±1`.
    TailUnfocused,
    /// `Y ~ Unif(0, 1)`, forecast `(G(x) + G(x + τ)) / 2` with `G` uniform.
    UniformUnfocused,
    /// `Y ~ GPD(1, 1/4)`, deterministic forecast matching `Y` above 5 only.
    NonrandomTailmatch,
    /// `Y` the middle value of `(X, 2X, L)` with `X | Δ ~ Exp(Δ)`,
    /// `L ~ GPD(1, γ/2)`; forecast `Exp(Δ)`. `X` is kept as a covariate.
    Optimistic { gamma: f64 },
    /// `μ ~ N(0, 1)`, `Y | μ ~ N(μ, 1)`; ideal, climatological, unfocused and
    /// sign-reversed forecasters.
    NormalQuartet,
    /// `Y ~ GPD(1, ξ)` with the deterministic forecast `GPD(σ_F, η)`.
    GpdPair { xi: f64, eta: f64, sigma_f: f64 },
}

impl Scenario {
    pub const NAMES: [&'static str; 8] = [
        "exponential-trio",
        "misinformed",
        "tail-unfocused",
        "uniform-unfocused",
        "nonrandom-tailmatch",
        "optimistic",
        "normal-quartet",
        "gpd-pair",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::ExponentialTrio { .. } => "exponential-trio",
            Scenario::Misinformed { .. } => "misinformed",
            Scenario::TailUnfocused => "tail-unfocused",
            Scenario::UniformUnfocused => "uniform-unfocused",
            Scenario::NonrandomTailmatch => "nonrandom-tailmatch",
            Scenario::Optimistic { .. } => "optimistic",
            Scenario::NormalQuartet => "normal-quartet",
            Scenario::GpdPair { .. } => "gpd-pair",
        }
    }

    /// Builds a scenario from its name and the generic parameter set, using
    /// the defaults `γ = 1/4`, `ν = 1.4`, `ξ = η = 1/4`, `σ_F = 1`.
    pub fn from_name(name: &str, params: &ScenarioParams) -> Result<Self, SimError> {
        let gamma = params.gamma.unwrap_or(0.25);
        Ok(match name {
            "exponential-trio" => Scenario::ExponentialTrio {
                gamma,
                nu: params.nu.unwrap_or(1.4),
            },
            "misinformed" => Scenario::Misinformed { gamma },
            "tail-unfocused" => Scenario::TailUnfocused,
            "uniform-unfocused" => Scenario::UniformUnfocused,
            "nonrandom-tailmatch" => Scenario::NonrandomTailmatch,
            "optimistic" => Scenario::Optimistic { gamma },
            "normal-quartet" => Scenario::NormalQuartet,
            "gpd-pair" => Scenario::GpdPair {
                xi: params.xi.unwrap_or(0.25),
                eta: params.eta.unwrap_or(0.25),
                sigma_f: params.sigma_f.unwrap_or(1.0),
            },
            other => return Err(SimError::UnknownScenario(other.to_string())),
        })
    }

    fn validate(&self) -> Result<(), SimError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(SimError::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            Scenario::ExponentialTrio { gamma, nu } => {
                positive("gamma", gamma)?;
                positive("nu", nu)
            }
            Scenario::Misinformed { gamma } | Scenario::Optimistic { gamma } => positive("gamma", gamma),
            Scenario::GpdPair { xi, eta, sigma_f } => {
                positive("sigma_f", sigma_f)?;
                for (name, v) in [("xi", xi), ("eta", eta)] {
                    if !v.is_finite() {
                        return Err(SimError::InvalidParameter(format!("{name} must be finite")));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// The exact marginal law of the observations, where it has a closed form
    /// within the distribution families.
    pub fn marginal_law(&self) -> Result<Option<ForecastDistribution>, SimError> {
        Ok(match *self {
            Scenario::ExponentialTrio { gamma, .. } | Scenario::Misinformed { gamma } => {
                Some(ForecastDistribution::gpd(1.0, gamma)?)
            }
            Scenario::TailUnfocused => Some(ForecastDistribution::exponential(1.0)?),
            Scenario::UniformUnfocused => Some(ForecastDistribution::uniform(0.0, 1.0)?),
            Scenario::NonrandomTailmatch => Some(ForecastDistribution::gpd(1.0, 0.25)?),
            Scenario::Optimistic { .. } => None,
            Scenario::NormalQuartet => Some(ForecastDistribution::normal(0.0, std::f64::consts::SQRT_2)?),
            Scenario::GpdPair { xi, .. } => Some(ForecastDistribution::gpd(1.0, xi)?),
        })
    }

    /// Human-readable statement of the marginal law of `Y`.
    pub fn marginal_description(&self) -> Result<String, SimError> {
        Ok(match (self, self.marginal_law()?) {
            (_, Some(law)) => law.to_string(),
            (Scenario::Optimistic { gamma }, None) => format!(
                "P(Y <= y) = L(y) H1(y) + (1 - L(y)) H2(y) with L = gpd(sigma=1, xi={}), \
                 H1 = gpd(sigma=1, xi={gamma}), H2 = scaled(gpd(sigma=1, xi={gamma}), by=2)",
                gamma / 2.0
            ),
            (_, None) => "no closed form".to_string(),
        })
    }
}

/// Optional scenario parameters as they arrive from the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub gamma: Option<f64>,
    pub nu: Option<f64>,
    pub xi: Option<f64>,
    pub eta: Option<f64>,
    pub sigma_f: Option<f64>,
}

/// Scenario, sample size and seed: everything needed to regenerate a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, n: usize, seed: u64) -> Self {
        Self { scenario, n, seed }
    }
}

/// Pairs for one forecaster.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastStream {
    pub forecaster: String,
    pub pairs: Vec<ForecastObservationPair>,
}

/// A generated sample: one stream per forecaster, sharing observations and
/// covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub spec: ScenarioSpec,
    pub streams: Vec<ForecastStream>,
}

impl Simulation {
    pub fn stream(&self, forecaster: &str) -> Option<&[ForecastObservationPair]> {
        self.streams
            .iter()
            .find(|s| s.forecaster == forecaster)
            .map(|s| s.pairs.as_slice())
    }

    pub fn forecasters(&self) -> Vec<&str> {
        self.streams.iter().map(|s| s.forecaster.as_str()).collect()
    }
}

/// One index worth of output: observation, covariates and one forecast per
/// forecaster.
struct Draw {
    y: f64,
    covariates: Covariates,
    forecasts: Vec<ForecastDistribution>,
}

fn assemble(spec: ScenarioSpec, names: &[&str], draws: Vec<Draw>) -> Simulation {
    let mut streams: Vec<ForecastStream> = names
        .iter()
        .map(|name| ForecastStream {
            forecaster: name.to_string(),
            pairs: Vec::with_capacity(draws.len()),
        })
        .collect();
    for draw in draws {
        for (stream, forecast) in streams.iter_mut().zip(draw.forecasts) {
            stream.pairs.push(ForecastObservationPair {
                forecast,
                observation: draw.y,
                covariates: draw.covariates.clone(),
                threshold: None,
            });
        }
    }
    Simulation { spec, streams }
}

fn covariates(values: &[(&Arc<str>, f64)]) -> Covariates {
    let mut c = Covariates::new();
    for (name, value) in values {
        c.insert(Arc::clone(name), *value);
    }
    c
}

/// Rate `Δ ~ Γ(1/γ, scale γ)`, which has mean one.
fn rate_distribution(gamma: f64) -> Result<ForecastDistribution, SimError> {
    Ok(ForecastDistribution::gamma(1.0 / gamma, gamma)?)
}

/// Draws `Exp(rate)` by inversion.
fn exponential_draw(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return -(-u).ln_1p() / rate;
        }
    }
}

fn sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn check_n(spec: &ScenarioSpec) -> Result<(), SimError> {
    if spec.n == 0 {
        return Err(SimError::InvalidParameter("n must be at least 1".into()));
    }
    spec.scenario.validate()
}

/// Generates the sample described by `spec`.
pub fn simulate(spec: &ScenarioSpec) -> Result<Simulation, SimError> {
    check_n(spec)?;
    match spec.scenario {
        Scenario::ExponentialTrio { gamma, nu } => gen_exponential_trio(spec, gamma, nu),
        Scenario::Misinformed { gamma } => gen_misinformed(spec, gamma),
        Scenario::TailUnfocused => gen_tail_unfocused(spec),
        Scenario::UniformUnfocused => gen_uniform_unfocused(spec),
        Scenario::NonrandomTailmatch => gen_nonrandom_tailmatch(spec),
        Scenario::Optimistic { gamma } => gen_optimistic(spec, gamma),
        Scenario::NormalQuartet => gen_normal_quartet(spec),
        Scenario::GpdPair { xi, eta, sigma_f } => gen_gpd_pair(spec, xi, eta, sigma_f),
    }
}

fn gen_exponential_trio(spec: &ScenarioSpec, gamma: f64, nu: f64) -> Result<Simulation, SimError> {
    let rate = rate_distribution(gamma)?;
    let climatological = ForecastDistribution::gpd(1.0, gamma)?;
    let delta_name: Arc<str> = Arc::from("delta");
    let draws = chunked(spec.n, spec.seed, |rng| {
        let delta = rate.sample(rng);
        let y = exponential_draw(rng, delta);
        Draw {
            y,
            covariates: covariates(&[(&delta_name, delta)]),
            forecasts: vec![
                ForecastDistribution::exponential(delta).expect("positive rate"),
                climatological.clone(),
                ForecastDistribution::exponential(delta / nu).expect("positive rate"),
            ],
        }
    });
    Ok(assemble(*spec, &["ideal", "climatological", "extremist"], draws))
}

fn gen_misinformed(spec: &ScenarioSpec, gamma: f64) -> Result<Simulation, SimError> {
    let rate = rate_distribution(gamma)?;
    let (d1, d2): (Arc<str>, Arc<str>) = (Arc::from("delta1"), Arc::from("delta2"));
    let draws = chunked(spec.n, spec.seed, |rng| {
        let delta1 = rate.sample(rng);
        let delta2 = rate.sample(rng);
        let y = exponential_draw(rng, delta1);
        Draw {
            y,
            covariates: covariates(&[(&d1, delta1), (&d2, delta2)]),
            forecasts: vec![ForecastDistribution::exponential(delta2).expect("positive rate")],
        }
    });
    Ok(assemble(*spec, &["misinformed"], draws))
}

fn gen_tail_unfocused(spec: &ScenarioSpec) -> Result<Simulation, SimError> {
    let base = ForecastDistribution::exponential(1.0)?;
    let plus = ForecastDistribution::shifted(base.clone(), (3.0f64 / 2.0).ln())?;
    let minus = ForecastDistribution::shifted(base, (1.0f64 / 2.0).ln())?;
    let tau_name: Arc<str> = Arc::from("tau");
    let draws = chunked(spec.n, spec.seed, |rng| {
        let y = exponential_draw(rng, 1.0);
        let tau = sign(rng);
        Draw {
            y,
            covariates: covariates(&[(&tau_name, tau)]),
            forecasts: vec![if tau > 0.0 { plus.clone() } else { minus.clone() }],
        }
    });
    Ok(assemble(*spec, &["tail-unfocused"], draws))
}

fn gen_uniform_unfocused(spec: &ScenarioSpec) -> Result<Simulation, SimError> {
    let g = ForecastDistribution::uniform(0.0, 1.0)?;
    // G(x + τ) is the cdf of G shifted by -τ.
    let forecast = |tau: f64| {
        ForecastDistribution::mixture2(0.5, g.clone(), ForecastDistribution::shifted(g.clone(), -tau)?)
    };
    let (plus, minus) = (forecast(1.0)?, forecast(-1.0)?);
    let tau_name: Arc<str> = Arc::from("tau");
    let draws = chunked(spec.n, spec.seed, |rng| {
        let y = g.sample(rng);
        let tau = sign(rng);
        Draw {
            y,
            covariates: covariates(&[(&tau_name, tau)]),
            forecasts: vec![if tau > 0.0 { plus.clone() } else { minus.clone() }],
        }
    });
    Ok(assemble(*spec, &["unfocused"], draws))
}

/// `GPD(4/5, 1/4)(x - 1)` below 5, `GPD(1, 1/4)` from 5 on.
pub fn nonrandom_tailmatch_forecast() -> Result<ForecastDistribution, DistError> {
    ForecastDistribution::piecewise(
        ForecastDistribution::shifted(ForecastDistribution::gpd(0.8, 0.25)?, 1.0)?,
        ForecastDistribution::gpd(1.0, 0.25)?,
        5.0,
    )
}

fn gen_nonrandom_tailmatch(spec: &ScenarioSpec) -> Result<Simulation, SimError> {
    let truth = ForecastDistribution::gpd(1.0, 0.25)?;
    let forecast = nonrandom_tailmatch_forecast()?;
    let draws = chunked(spec.n, spec.seed, |rng| Draw {
        y: truth.sample(rng),
        covariates: Covariates::new(),
        forecasts: vec![forecast.clone()],
    });
    Ok(assemble(*spec, &["tailmatch"], draws))
}

fn gen_optimistic(spec: &ScenarioSpec, gamma: f64) -> Result<Simulation, SimError> {
    let rate = rate_distribution(gamma)?;
    let l_law = ForecastDistribution::gpd(1.0, gamma / 2.0)?;
    let (delta_name, x_name): (Arc<str>, Arc<str>) = (Arc::from("delta"), Arc::from("x"));
    let draws = chunked(spec.n, spec.seed, |rng| {
        let delta = rate.sample(rng);
        let x = exponential_draw(rng, delta);
        let l = l_law.sample(rng);
        // Middle value of (x, 2x, l); x <= 2x since x >= 0.
        let y = l.clamp(x, 2.0 * x);
        Draw {
            y,
            covariates: covariates(&[(&delta_name, delta), (&x_name, x)]),
            forecasts: vec![ForecastDistribution::exponential(delta).expect("positive rate")],
        }
    });
    Ok(assemble(*spec, &["optimistic"], draws))
}

fn gen_normal_quartet(spec: &ScenarioSpec) -> Result<Simulation, SimError> {
    let standard = ForecastDistribution::normal(0.0, 1.0)?;
    let climatological = ForecastDistribution::normal(0.0, std::f64::consts::SQRT_2)?;
    let (mu_name, tau_name): (Arc<str>, Arc<str>) = (Arc::from("mu"), Arc::from("tau"));
    let draws = chunked(spec.n, spec.seed, |rng| {
        let mu = standard.sample(rng);
        let tau = sign(rng);
        let y = mu + standard.sample(rng);
        let normal = |m: f64| ForecastDistribution::normal(m, 1.0).expect("finite mean");
        Draw {
            y,
            covariates: covariates(&[(&mu_name, mu), (&tau_name, tau)]),
            forecasts: vec![
                normal(mu),
                climatological.clone(),
                ForecastDistribution::mixture2(0.5, normal(mu), normal(mu + tau)).expect("valid weights"),
                normal(-mu),
            ],
        }
    });
    Ok(assemble(*spec, &["ideal", "climatological", "unfocused", "sign-reversed"], draws))
}

fn gen_gpd_pair(spec: &ScenarioSpec, xi: f64, eta: f64, sigma_f: f64) -> Result<Simulation, SimError> {
    let truth = ForecastDistribution::gpd(1.0, xi)?;
    let forecast = ForecastDistribution::gpd(sigma_f, eta)?;
    let draws = chunked(spec.n, spec.seed, |rng| Draw {
        y: truth.sample(rng),
        covariates: Covariates::new(),
        forecasts: vec![forecast.clone()],
    });
    Ok(assemble(*spec, &["gpd"], draws))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::UnivariateDistribution;
    use crate::numeric::CHUNK_SIZE;

    fn trio(n: usize, seed: u64) -> Simulation {
        simulate(&ScenarioSpec::new(Scenario::ExponentialTrio { gamma: 0.25, nu: 1.4 }, n, seed)).unwrap()
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(trio(1000, 7), trio(1000, 7));
        assert_ne!(trio(1000, 7).streams[0].pairs, trio(1000, 8).streams[0].pairs);
    }

    #[test]
    fn chunks_do_not_depend_on_length() {
        // Prefixes agree because each chunk has its own substream.
        let short = trio(CHUNK_SIZE + 10, 3);
        let long = trio(CHUNK_SIZE + 500, 3);
        assert_eq!(short.streams[0].pairs[..], long.streams[0].pairs[..CHUNK_SIZE + 10]);
    }

    #[test]
    fn trio_shares_observations_and_covariates() {
        let sim = trio(500, 1);
        assert_eq!(sim.forecasters(), vec!["ideal", "climatological", "extremist"]);
        for i in 0..500 {
            let ys: Vec<f64> = sim.streams.iter().map(|s| s.pairs[i].observation).collect();
            assert!(ys.iter().all(|&y| y == ys[0]));
            let delta = sim.streams[0].pairs[i].covariates.get("delta").unwrap();
            assert_eq!(sim.streams[2].pairs[i].covariates.get("delta"), Some(delta));
        }
    }

    #[test]
    fn misinformed_has_both_rates() {
        let sim = simulate(&ScenarioSpec::new(Scenario::Misinformed { gamma: 0.25 }, 10, 1)).unwrap();
        let c = &sim.streams[0].pairs[0].covariates;
        assert!(c.get("delta1").is_some() && c.get("delta2").is_some());
    }

    #[test]
    fn optimistic_takes_middle_value() {
        let sim = simulate(&ScenarioSpec::new(Scenario::Optimistic { gamma: 0.25 }, 2000, 9)).unwrap();
        for pair in &sim.streams[0].pairs {
            let x = pair.covariates.get("x").unwrap();
            assert!(x <= pair.observation && pair.observation <= 2.0 * x);
        }
    }

    #[test]
    fn nonrandom_forecast_is_continuous_at_splice() {
        let f = nonrandom_tailmatch_forecast().unwrap();
        let below = ForecastDistribution::gpd(0.8, 0.25).unwrap().cdf(4.0);
        let above = ForecastDistribution::gpd(1.0, 0.25).unwrap().cdf(5.0);
        assert!(below <= above);
        assert!((f.cdf_left_limit(5.0) - f.cdf(5.0)).abs() < 1e-15);
    }

    #[test]
    fn parameter_validation() {
        let bad = ScenarioSpec::new(Scenario::ExponentialTrio { gamma: -1.0, nu: 1.4 }, 10, 1);
        assert!(matches!(simulate(&bad), Err(SimError::InvalidParameter(_))));
        let empty = ScenarioSpec::new(Scenario::TailUnfocused, 0, 1);
        assert!(simulate(&empty).is_err());
        assert!(matches!(
            Scenario::from_name("nope", &ScenarioParams::default()),
            Err(SimError::UnknownScenario(_))
        ));
        for name in Scenario::NAMES {
            assert_eq!(Scenario::from_name(name, &ScenarioParams::default()).unwrap().name(), name);
        }
    }
}
