//! File formats, outputs and end-to-end pipelines behind the command-line
//! tool: JSON-lines and ensemble-CSV datasets, CSV curve tables, SVG panels
//! drawn from those tables, run manifests, the `diagnose` pipeline and the
//! figure recipes.

pub mod dataset;
pub mod diagnose;
pub mod manifest;
pub mod output;
pub mod repro;
pub mod svg;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::diagnostics::DiagnosticError;
use crate::inference::InferenceError;
use crate::scoring::ScoringError;
use crate::simlab::SimError;

pub use dataset::{load_dataset, read_ensemble_csv, read_jsonl, save_dataset, write_jsonl};
pub use diagnose::{run_diagnose, BinConfig, DiagnoseSummary, RunConfig, ThresholdSummary};
pub use manifest::Manifest;
pub use repro::{repro, FIGURES};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{source_name}:{line}: {message}")]
    Parse { source_name: String, line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown figure `{0}`")]
    UnknownFigure(String),
    #[error("figure `{0}` needs the case-study precipitation data, which is not distributed")]
    NotReproducible(String),
    #[error(transparent)]
    Diagnostic(#[from] DiagnosticError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Whether the failure comes from data that make a diagnostic undefined
    /// rather than from bad input or configuration.
    pub fn is_degenerate(&self) -> bool {
        let diag = match self {
            HarnessError::Diagnostic(e) => Some(e),
            HarnessError::Inference(InferenceError::Diagnostic(e)) => Some(e),
            _ => None,
        };
        matches!(
            diag,
            Some(DiagnosticError::DegenerateDenominator { .. } | DiagnosticError::NoExceedances { .. })
        ) || matches!(self, HarnessError::Inference(InferenceError::DegenerateNull(_)))
    }
}

pub(crate) fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}
