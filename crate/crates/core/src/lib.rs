//! Tail-calibration diagnostics for probabilistic forecasts of extreme events.
//!
//! The crate is organised bottom-up:
//!
//! - [`dists`]: forecast distributions with exact cdf, left-limit, quantile
//!   and sampling semantics, plus a text grammar for files and the CLI;
//! - [`diagnostics`]: excess PIT values and the empirical combined,
//!   occurrence, severity, binned and marginal tail diagnostics;
//! - [`inference`]: delta-method confidence intervals, KS and binomial tests;
//! - [`simlab`]: seeded generators for the synthetic forecasters;
//! - [`scoring`]: CRPS, expected scores and CRPS-minimizing EMOS fitting;
//! - [`harness`]: dataset formats, CSV/SVG outputs, manifests and figure
//!   recipes used by the command-line tool.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dists;
pub mod harness;
pub mod inference;
pub mod numeric;
pub mod scoring;
pub mod simlab;

pub use diagnostics::{
    Covariates, CurveKind, DiagnosticCurve, DiagnosticError, ForecastObservationPair, RatioSeries,
};
pub use dists::{DistError, ExcessDistribution, Family, ForecastDistribution, UnivariateDistribution};
pub use inference::{ConfidenceInterval, InferenceError, TestReport};
pub use scoring::{EmosModel, ScoreEstimate};
pub use simlab::ScenarioSpec;
