//! Recipes that regenerate the data behind each simulated figure: the
//! scenario, its forecasters, thresholds and optional binning. Every
//! forecaster gets its own `diagnose` output directory.

use std::path::Path;

use serde::Serialize;

use super::diagnose::{run_diagnose, BinConfig, DiagnoseSummary, RunConfig};
use super::manifest::Manifest;
use super::HarnessError;
use crate::diagnostics::ThresholdSpec;
use crate::simlab::{simulate, Scenario, ScenarioParams, ScenarioSpec};

/// Figure identifiers accepted by [`repro`].
pub const FIGURES: [&str; 7] = [
    "sim-nonrandom",
    "sim-unfocused",
    "ss-ptc-reldiag",
    "ss-ptc-reldiag2",
    "ss-ptc-cond",
    "sim-stoch",
    "ss-ptc-reldiag-norm",
];

/// Case-study figures built from precipitation data that is not shipped.
pub const CASE_STUDY_FIGURES: [&str; 3] = ["cs-pit", "cs-pit-qu", "cs-pit-ci"];

/// Quantile levels of the observations used as curve thresholds.
pub const CURVE_LEVELS: [f64; 5] = [0.5, 0.9, 0.95, 0.99, 0.995];

#[derive(Debug, Clone, Serialize)]
pub struct Recipe {
    pub figure: &'static str,
    pub description: &'static str,
    pub scenario: Scenario,
    pub config: RunConfig,
}

fn series_levels() -> Vec<ThresholdSpec> {
    (0..=24).map(|i| ThresholdSpec::Quantile(0.5 + 0.495 * i as f64 / 24.0)).collect()
}

/// The recipe for `figure`, with the PIT randomization seeded by `seed`.
pub fn recipe(figure: &str, seed: u64) -> Result<Recipe, HarnessError> {
    if CASE_STUDY_FIGURES.contains(&figure) {
        return Err(HarnessError::NotReproducible(figure.to_string()));
    }
    let defaults = ScenarioParams::default();
    let base = RunConfig {
        thresholds: CURVE_LEVELS.iter().map(|&l| ThresholdSpec::Quantile(l)).collect(),
        series_thresholds: Some(series_levels()),
        seed,
        ..Default::default()
    };
    let delta_bins = RunConfig { bins: Some(BinConfig { covariate: "delta".into(), bins: 3 }), ..base.clone() };
    let (figure, description, scenario, config) = match figure {
        "sim-nonrandom" => (
            "sim-nonrandom",
            "non-random forecast matching the outcome tail only: combined ratio, pp-plot, occurrence ratio",
            Scenario::from_name("nonrandom-tailmatch", &defaults)?,
            base,
        ),
        "sim-unfocused" => (
            "sim-unfocused",
            "unfocused forecaster with uniform G: combined ratio, pp-plot, occurrence ratio",
            Scenario::from_name("uniform-unfocused", &defaults)?,
            base,
        ),
        "ss-ptc-reldiag" => (
            "ss-ptc-reldiag",
            "combined ratio for the ideal, climatological and extremist forecasters",
            Scenario::from_name("exponential-trio", &defaults)?,
            base,
        ),
        "ss-ptc-reldiag2" => (
            "ss-ptc-reldiag2",
            "all three panels for the ideal, climatological and extremist forecasters",
            Scenario::from_name("exponential-trio", &defaults)?,
            base,
        ),
        "ss-ptc-cond" => (
            "ss-ptc-cond",
            "sup distance of the binned combined ratio, three bins of delta",
            Scenario::from_name("exponential-trio", &defaults)?,
            delta_bins,
        ),
        "sim-stoch" => (
            "sim-stoch",
            "optimistic random forecast: combined ratio and binned sup distance",
            Scenario::from_name("optimistic", &defaults)?,
            delta_bins,
        ),
        "ss-ptc-reldiag-norm" => (
            "ss-ptc-reldiag-norm",
            "ideal, climatological, unfocused and sign-reversed normal forecasters",
            Scenario::from_name("normal-quartet", &defaults)?,
            base,
        ),
        other => return Err(HarnessError::UnknownFigure(other.to_string())),
    };
    Ok(Recipe { figure, description, scenario, config })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReproSummary {
    pub figure: String,
    pub forecasters: Vec<(String, DiagnoseSummary)>,
}

impl ReproSummary {
    pub fn degenerate(&self) -> bool {
        self.forecasters.iter().any(|(_, s)| s.degenerate())
    }
}

#[derive(Serialize)]
struct ReproConfig<'a> {
    recipe: &'a Recipe,
    spec: ScenarioSpec,
    marginal_law: String,
}

/// Simulates `n` pairs for `figure` and writes one diagnose directory per
/// forecaster under `out_dir`, plus a manifest.
pub fn repro(figure: &str, n: usize, seed: u64, out_dir: &Path) -> Result<ReproSummary, HarnessError> {
    let recipe = recipe(figure, seed)?;
    let spec = ScenarioSpec::new(recipe.scenario, n, seed);
    let sim = simulate(&spec)?;
    let mut forecasters = Vec::new();
    let mut outputs = Vec::new();
    for stream in &sim.streams {
        let dir = out_dir.join(&stream.forecaster);
        let summary = run_diagnose(&stream.pairs, &recipe.config, &dir, &stream.forecaster)?;
        outputs.extend(summary.outputs.iter().map(|o| format!("{}/{o}", stream.forecaster)));
        forecasters.push((stream.forecaster.clone(), summary));
    }
    let config = ReproConfig { recipe: &recipe, spec, marginal_law: recipe.scenario.marginal_description()? };
    let mut manifest = Manifest::new(&format!("repro {figure}"), Some(seed), &config)?;
    manifest.outputs = outputs;
    manifest.write(out_dir)?;
    Ok(ReproSummary { figure: figure.to_string(), forecasters })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_figure_has_a_recipe() {
        for id in FIGURES {
            assert_eq!(recipe(id, 0).unwrap().figure, id);
        }
        assert!(matches!(recipe("cs-pit", 0), Err(HarnessError::NotReproducible(_))));
        assert!(matches!(recipe("nope", 0), Err(HarnessError::UnknownFigure(_))));
    }

    #[test]
    fn small_repro_writes_per_forecaster_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let summary = repro("ss-ptc-cond", 3000, 5, dir.path()).unwrap();
        assert_eq!(summary.forecasters.len(), 3);
        for f in ["ideal", "climatological", "extremist"] {
            assert!(dir.path().join(f).join("sup_distance_bin2.csv").exists());
        }
        let manifest = Manifest::read(dir.path()).unwrap();
        assert_eq!(manifest.seed, Some(5));
        assert_eq!(manifest.config["spec"]["n"], 3000);
    }
}
