//! Ensemble model output statistics: censored logistic or censored GEV
//! forecasts whose location is affine in the ensemble mean and whose scale
//! is `c · (1 + s)^d` in the ensemble spread `s`, fitted by minimizing the
//! mean CRPS with Nelder–Mead over `(a, b, ln c, d[, shape])`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nelder_mead::{self, NelderMeadOptions};
use super::{crps, ScoringError};
use crate::dists::ForecastDistribution;
use crate::numeric;

pub const MIN_TRAINING_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmosFamily {
    CensoredLogistic,
    CensoredGev,
}

impl EmosFamily {
    pub fn name(self) -> &'static str {
        match self {
            EmosFamily::CensoredLogistic => "censored_logistic",
            EmosFamily::CensoredGev => "censored_gev",
        }
    }
}

impl std::str::FromStr for EmosFamily {
    type Err = ScoringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "censored_logistic" => Ok(EmosFamily::CensoredLogistic),
            "censored_gev" => Ok(EmosFamily::CensoredGev),
            other => Err(ScoringError::InvalidModel(format!("unknown EMOS family `{other}`"))),
        }
    }
}

/// Fitted or initial EMOS coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmosModel {
    pub family: EmosFamily,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gev_shape: Option<f64>,
    pub censor_point: f64,
}

impl EmosModel {
    pub fn censored_logistic(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { family: EmosFamily::CensoredLogistic, a, b, c, d, gev_shape: None, censor_point: 0.0 }
    }

    pub fn censored_gev(a: f64, b: f64, c: f64, d: f64, shape: f64) -> Self {
        Self { family: EmosFamily::CensoredGev, a, b, c, d, gev_shape: Some(shape), censor_point: 0.0 }
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        let coefs = [self.a, self.b, self.c, self.d, self.censor_point];
        if coefs.iter().any(|x| !x.is_finite()) {
            return Err(ScoringError::InvalidModel("coefficients must be finite".into()));
        }
        if self.c <= 0.0 {
            return Err(ScoringError::InvalidModel(format!("scale coefficient c = {} must be positive", self.c)));
        }
        match (self.family, self.gev_shape) {
            (EmosFamily::CensoredGev, Some(xi)) if xi.is_finite() => Ok(()),
            (EmosFamily::CensoredGev, _) => Err(ScoringError::InvalidModel("censored_gev needs a finite gev_shape".into())),
            (EmosFamily::CensoredLogistic, None) => Ok(()),
            (EmosFamily::CensoredLogistic, Some(_)) => {
                Err(ScoringError::InvalidModel("gev_shape is only used by censored_gev".into()))
            }
        }
    }

    pub fn location(&self, mean: f64) -> f64 {
        self.a + self.b * mean
    }

    pub fn scale(&self, sd: f64) -> f64 {
        self.c * (1.0 + sd).powf(self.d)
    }

    /// Predictive distribution for an ensemble with mean `mean` and
    /// standard deviation `sd`.
    pub fn predict(&self, mean: f64, sd: f64) -> Result<ForecastDistribution, ScoringError> {
        self.validate()?;
        let (mu, sigma) = (self.location(mean), self.scale(sd));
        let base = match self.family {
            EmosFamily::CensoredLogistic => ForecastDistribution::logistic(mu, sigma)?,
            EmosFamily::CensoredGev => ForecastDistribution::gev(mu, sigma, self.gev_shape.unwrap_or(0.0))?,
        };
        Ok(ForecastDistribution::censored_below(base, self.censor_point)?)
    }

    fn to_params(&self) -> Vec<f64> {
        let mut p = vec![self.a, self.b, self.c.ln(), self.d];
        if let Some(xi) = self.gev_shape {
            p.push(xi);
        }
        p
    }

    fn with_params(&self, p: &[f64]) -> Self {
        Self {
            family: self.family,
            a: p[0],
            b: p[1],
            c: p[2].exp(),
            d: p[3],
            gev_shape: p.get(4).copied(),
            censor_point: self.censor_point,
        }
    }
}

/// One training case: ensemble mean, ensemble standard deviation and the
/// verifying observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmosSample {
    pub mean: f64,
    pub sd: f64,
    pub observation: f64,
}

impl EmosSample {
    /// Summary statistics of raw members; the spread uses divisor `m − 1`.
    pub fn from_members(members: &[f64], observation: f64) -> Self {
        let m = members.len();
        let mean = numeric::mean(members);
        let sd = if m > 1 {
            (numeric::sum(members.iter().map(|x| (x - mean) * (x - mean))) / (m - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sd, observation }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmosFit {
    pub model: EmosModel,
    /// Mean training CRPS at the returned coefficients.
    pub objective: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Mean CRPS of `model` over `rows`, `+∞` if any forecast is invalid.
pub fn mean_crps(model: &EmosModel, rows: &[EmosSample]) -> f64 {
    if model.validate().is_err() {
        return f64::INFINITY;
    }
    let scores: Result<Vec<f64>, ScoringError> = rows
        .par_iter()
        .map(|r| crps(&model.predict(r.mean, r.sd)?, r.observation))
        .collect();
    match scores {
        Ok(s) => numeric::mean(&s),
        Err(_) => f64::INFINITY,
    }
}

/// Fits the coefficients of `init`'s family by Nelder–Mead on the mean
/// CRPS. The objective at `init` is checked first and does not count
/// against `options.budget`.
pub fn emos_fit(training: &[EmosSample], init: &EmosModel, options: &NelderMeadOptions) -> Result<EmosFit, ScoringError> {
    if training.len() < MIN_TRAINING_ROWS {
        return Err(ScoringError::InsufficientData { needed: MIN_TRAINING_ROWS, got: training.len() });
    }
    if let Some(index) = training
        .iter()
        .position(|r| !(r.mean.is_finite() && r.sd.is_finite() && r.observation.is_finite() && r.sd >= 0.0))
    {
        return Err(ScoringError::NonFiniteRow { index });
    }
    if training.iter().all(|r| r.sd == 0.0) {
        return Err(ScoringError::DegeneratePredictor);
    }
    init.validate()?;
    // Canonical row order makes the objective bit-identical under
    // permutations of the input.
    let mut rows = training.to_vec();
    rows.sort_by(|x, y| {
        x.mean
            .total_cmp(&y.mean)
            .then(x.sd.total_cmp(&y.sd))
            .then(x.observation.total_cmp(&y.observation))
    });
    let start = mean_crps(init, &rows);
    if !start.is_finite() {
        return Err(ScoringError::Initialization(start));
    }
    let result = nelder_mead::minimize(|p| mean_crps(&init.with_params(p), &rows), &init.to_params(), options);
    if result.evaluations == 0 {
        return Ok(EmosFit { model: init.clone(), objective: start, evaluations: 0, converged: false });
    }
    Ok(EmosFit {
        model: init.with_params(&result.x),
        objective: result.value,
        evaluations: result.evaluations,
        converged: result.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::substream;
    use rand::Rng;

    fn synthetic(n: usize, seed: u64) -> Vec<EmosSample> {
        let mut rng = substream(seed, 0);
        (0..n)
            .map(|_| {
                let mean = 2.0 + 3.0 * (rng.random::<f64>() - 0.5);
                let sd = rng.random::<f64>() * 2.0;
                let u: f64 = rng.random_range(1e-12..1.0);
                let y = (mean + (u / (1.0 - u)).ln()).max(0.0);
                EmosSample { mean, sd, observation: y }
            })
            .collect()
    }

    #[test]
    fn json_round_trip() {
        let m = EmosModel::censored_gev(0.1, 0.9, 1.2, 0.3, 0.1);
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"family\":\"censored_gev\""));
        assert_eq!(serde_json::from_str::<EmosModel>(&text).unwrap(), m);
        let l = EmosModel::censored_logistic(0.0, 1.0, 1.0, 0.0);
        assert!(!serde_json::to_string(&l).unwrap().contains("gev_shape"));
    }

    #[test]
    fn zero_budget_returns_init() {
        let init = EmosModel::censored_logistic(0.5, 0.8, 1.5, 0.3);
        let fit = emos_fit(&synthetic(50, 1), &init, &NelderMeadOptions { budget: 0, ..Default::default() }).unwrap();
        assert_eq!(fit.model, init);
        assert!(!fit.converged);
    }

    #[test]
    fn permutation_gives_identical_fit() {
        let rows = synthetic(80, 2);
        let mut reversed = rows.clone();
        reversed.reverse();
        let init = EmosModel::censored_logistic(0.5, 0.8, 1.5, 0.3);
        let opts = NelderMeadOptions { budget: 300, ..Default::default() };
        let a = emos_fit(&rows, &init, &opts).unwrap();
        let b = emos_fit(&reversed, &init, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_training() {
        let init = EmosModel::censored_logistic(0.0, 1.0, 1.0, 0.0);
        let opts = NelderMeadOptions::default();
        assert!(matches!(
            emos_fit(&synthetic(9, 3), &init, &opts),
            Err(ScoringError::InsufficientData { needed: 10, got: 9 })
        ));
        let flat: Vec<_> = synthetic(20, 3).into_iter().map(|r| EmosSample { sd: 0.0, ..r }).collect();
        assert!(matches!(emos_fit(&flat, &init, &opts), Err(ScoringError::DegeneratePredictor)));
        let heavy = EmosModel::censored_gev(0.0, 1.0, 1.0, 0.0, 1.5);
        assert!(matches!(emos_fit(&synthetic(20, 3), &heavy, &opts), Err(ScoringError::Initialization(_))));
    }

    #[test]
    fn predictive_distribution_has_censoring_atom() {
        use crate::dists::UnivariateDistribution;
        let m = EmosModel::censored_logistic(0.0, 1.0, 1.0, 0.0);
        let f = m.predict(0.0, 1.0).unwrap();
        assert!((f.cdf(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(f.cdf_left_limit(0.0), 0.0);
        let sample = EmosSample::from_members(&[1.0, 2.0, 3.0], 0.0);
        assert_eq!(sample.mean, 2.0);
        assert_eq!(sample.sd, 1.0);
    }
}
