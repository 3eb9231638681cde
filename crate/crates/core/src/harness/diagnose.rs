//! The `diagnose` pipeline: for each threshold, the combined-ratio curve,
//! the severity pp-curve and optional per-bin and marginal curves; across
//! thresholds, the occurrence ratio and sup-distance series; then one SVG
//! per panel drawn from the written CSVs.
//!
//! A threshold where a diagnostic is undefined (no forecast tail mass, no
//! exceedances, an empty bin) is skipped with a warning; the caller turns
//! warnings into a nonzero exit status.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::output::{curve_table, marginal_table, Table};
use super::svg::{self, PanelKind};
use super::{io_error, HarnessError};
use crate::diagnostics::{
    marginal_tail_curve, resolve_thresholds, sup_distance, uniform_grid, BinPartition, DiagnosticCurve,
    DiagnosticError, ForecastObservationPair, PitRandomizer, TailSample, ThresholdSpec,
};
use crate::inference::{ConfidenceInterval, DeltaMethod, InferenceError};

pub const SUMMARY_FILE: &str = "summary.json";

/// Covariate-quantile binning for the conditional diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinConfig {
    pub covariate: String,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Thresholds at which curves are drawn.
    pub thresholds: Vec<ThresholdSpec>,
    /// Threshold grid for the occurrence and sup-distance series; defaults
    /// to `thresholds`.
    #[serde(default)]
    pub series_thresholds: Option<Vec<ThresholdSpec>>,
    pub u_grid_points: usize,
    #[serde(default)]
    pub bins: Option<BinConfig>,
    #[serde(default)]
    pub ci_level: Option<f64>,
    #[serde(default)]
    pub marginal: bool,
    /// Seeds the PIT randomization for forecasts with atoms.
    pub seed: u64,
    pub plots: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            thresholds: Vec::new(),
            series_thresholds: None,
            u_grid_points: 101,
            bins: None,
            ci_level: None,
            marginal: false,
            seed: 0,
            plots: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.thresholds.is_empty() {
            return Err(HarnessError::Config("the threshold list is empty".into()));
        }
        let all = self.thresholds.iter().chain(self.series_thresholds.iter().flatten());
        for spec in all {
            match *spec {
                ThresholdSpec::Quantile(level) if !(level > 0.0 && level < 1.0) => {
                    return Err(HarnessError::Config(format!("quantile level {level} is outside (0, 1)")));
                }
                ThresholdSpec::Value(t) if t.is_nan() || t == f64::INFINITY => {
                    return Err(HarnessError::Config(format!("threshold {t} is not usable")));
                }
                _ => {}
            }
        }
        if let Some(level) = self.ci_level {
            if !(level > 0.0 && level < 1.0) {
                return Err(HarnessError::Config(format!("confidence level {level} is outside (0, 1)")));
            }
        }
        if self.u_grid_points < 2 {
            return Err(HarnessError::Config("the u grid needs at least 2 points".into()));
        }
        if let Some(b) = &self.bins {
            if b.bins == 0 {
                return Err(HarnessError::Config("need at least one bin".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub spec: ThresholdSpec,
    pub value: f64,
    pub n_exceedances: usize,
    pub occurrence_ratio: Option<f64>,
    pub sup_distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub binned_sup_distance: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseSummary {
    pub n: usize,
    pub thresholds: Vec<ThresholdSummary>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

impl DiagnoseSummary {
    /// Whether any diagnostic had to be skipped.
    pub fn degenerate(&self) -> bool {
        !self.warnings.is_empty()
    }
}

/// Scalar diagnostics of one threshold, shared by the curve and series
/// outputs.
struct Evaluation {
    sample: TailSample,
    delta: Option<DeltaMethod>,
    occurrence: Result<f64, DiagnosticError>,
    pooled_curve: Result<DiagnosticCurve, DiagnosticError>,
    binned: Vec<Option<DiagnosticCurve>>,
}

fn is_degenerate(e: &DiagnosticError) -> bool {
    matches!(e, DiagnosticError::DegenerateDenominator { .. } | DiagnosticError::NoExceedances { .. })
}

fn band(delta: &Option<DeltaMethod>, level: Option<f64>, f: impl Fn(&DeltaMethod, f64) -> Result<ConfidenceInterval, InferenceError>) -> Option<(f64, f64)> {
    let (delta, level) = (delta.as_ref()?, level?);
    f(delta, level).ok().map(|ci| (ci.lower, ci.upper))
}

fn describe(spec: &ThresholdSpec, t: f64) -> String {
    match spec {
        ThresholdSpec::Value(_) => format!("t={t}"),
        ThresholdSpec::Quantile(level) => format!("t={t} (quantile {level})"),
    }
}

struct Writer<'a> {
    dir: &'a Path,
    outputs: Vec<String>,
}

impl Writer<'_> {
    fn table(&mut self, name: &str, table: &Table) -> Result<PathBuf, HarnessError> {
        let path = self.dir.join(name);
        table.write(&path)?;
        self.outputs.push(name.to_string());
        Ok(path)
    }

    fn svg(&mut self, name: &str, kind: PanelKind, title: &str, files: &[PathBuf]) -> Result<(), HarnessError> {
        if files.is_empty() {
            return Ok(());
        }
        let refs: Vec<&Path> = files.iter().map(PathBuf::as_path).collect();
        svg::render_files(kind, title, &refs, &self.dir.join(name))?;
        self.outputs.push(name.to_string());
        Ok(())
    }
}

fn with_threshold_meta(table: Table, spec: &ThresholdSpec) -> Table {
    match spec {
        ThresholdSpec::Quantile(level) => table.with_meta("level", level),
        ThresholdSpec::Value(_) => table,
    }
}

/// Runs the diagnostics on `pairs` and writes every output into `out_dir`.
pub fn run_diagnose(
    pairs: &[ForecastObservationPair],
    config: &RunConfig,
    out_dir: &Path,
    title: &str,
) -> Result<DiagnoseSummary, HarnessError> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(DiagnosticError::EmptySample.into());
    }
    std::fs::create_dir_all(out_dir).map_err(io_error(out_dir))?;
    let grid = uniform_grid(config.u_grid_points);
    let randomizer = PitRandomizer::new(config.seed);
    let bins = match &config.bins {
        Some(b) => Some(BinPartition::quantile_bins(pairs, &b.covariate, b.bins)?.assign(pairs)?),
        None => None,
    };
    let evaluate = |t: f64| -> Result<Evaluation, HarnessError> {
        let sample = TailSample::new(pairs, t, &randomizer)?;
        let delta = match config.ci_level {
            Some(_) => DeltaMethod::new(&sample).ok(),
            None => None,
        };
        let binned = match &bins {
            Some(b) => sample.binned_combined_curves(b, &grid)?.into_iter().map(|c| c.curve).collect(),
            None => Vec::new(),
        };
        Ok(Evaluation {
            occurrence: sample.occurrence_ratio(),
            pooled_curve: sample.combined_curve(&grid),
            delta,
            binned,
            sample,
        })
    };

    let mut out = Writer { dir: out_dir, outputs: Vec::new() };
    let mut warnings = Vec::new();
    let values = resolve_thresholds(pairs, &config.thresholds)?;
    let mut main_evals = Vec::with_capacity(values.len());
    let (mut combined_files, mut severity_files, mut marginal_files) = (Vec::new(), Vec::new(), Vec::new());
    let mut binned_files: Vec<Vec<PathBuf>> = vec![Vec::new(); bins.as_ref().map_or(0, Vec::len)];

    for (k, (spec, &t)) in config.thresholds.iter().zip(&values).enumerate() {
        let eval = evaluate(t)?;
        let label = describe(spec, t);
        match &eval.pooled_curve {
            Ok(curve) => {
                let mut curve = curve.clone();
                if config.ci_level.is_some() {
                    curve.band = Some(
                        grid.iter()
                            .map(|&u| band(&eval.delta, config.ci_level, |d, l| d.combined(u, l)).unwrap_or((f64::NAN, f64::NAN)))
                            .collect(),
                    );
                }
                combined_files.push(out.table(&format!("combined_t{k}.csv"), &with_threshold_meta(curve_table(&curve), spec))?);
            }
            Err(e) if is_degenerate(e) => warnings.push(format!("combined ratio skipped at {label}: {e}")),
            Err(e) => return Err(e.clone().into()),
        }
        match eval.sample.severity_curve(&grid) {
            Ok(mut curve) => {
                if config.ci_level.is_some() {
                    curve.band = Some(
                        grid.iter()
                            .map(|&u| band(&eval.delta, config.ci_level, |d, l| d.severity(u, l)).unwrap_or((f64::NAN, f64::NAN)))
                            .collect(),
                    );
                }
                severity_files.push(out.table(&format!("severity_t{k}.csv"), &with_threshold_meta(curve_table(&curve), spec))?);
            }
            Err(e) if is_degenerate(&e) => warnings.push(format!("severity curve skipped at {label}: {e}")),
            Err(e) => return Err(e.into()),
        }
        for (j, curve) in eval.binned.iter().enumerate() {
            match curve {
                Some(curve) => {
                    let table = with_threshold_meta(curve_table(curve), spec).with_meta("bin", j);
                    binned_files[j].push(out.table(&format!("combined_t{k}_bin{j}.csv"), &table)?);
                }
                None => warnings.push(format!("bin {j} has no forecast tail mass at {label}")),
            }
        }
        if config.marginal {
            let max_excess = pairs.iter().map(|p| p.observation - t).fold(0.0, f64::max);
            let x_grid: Vec<f64> = (0..=50).map(|i| max_excess * i as f64 / 50.0).collect();
            match marginal_tail_curve(pairs, t, &x_grid) {
                Ok(curve) => {
                    marginal_files.push(out.table(&format!("marginal_t{k}.csv"), &with_threshold_meta(marginal_table(&curve), spec))?);
                }
                Err(e) if is_degenerate(&e) => warnings.push(format!("marginal curve skipped at {label}: {e}")),
                Err(e) => return Err(e.into()),
            }
        }
        main_evals.push(eval);
    }

    // Threshold series.
    let (series_specs, series_values, series_evals) = match &config.series_thresholds {
        Some(specs) => {
            let values = resolve_thresholds(pairs, specs)?;
            let evals = values.iter().map(|&t| evaluate(t)).collect::<Result<Vec<_>, _>>()?;
            (specs.clone(), values, evals)
        }
        None => (config.thresholds.clone(), values.clone(), main_evals),
    };
    let series_header = ["t", "value", "lower", "upper", "n_exceedances"];
    let mut occurrence = Table::new(&series_header).with_meta("kind", "occurrence").with_meta("label", "occurrence ratio");
    let mut pooled_sup = Table::new(&series_header).with_meta("kind", "sup_distance").with_meta("label", "pooled");
    let n_bins = binned_files.len();
    let mut bin_sup: Vec<Table> = (0..n_bins)
        .map(|j| Table::new(&series_header).with_meta("kind", "sup_distance").with_meta("bin", j).with_meta("label", format!("bin {}", j + 1)))
        .collect();
    let mut summaries = Vec::new();
    for ((spec, &t), eval) in series_specs.iter().zip(&series_values).zip(&series_evals) {
        let n_t = eval.sample.n_exceedances() as f64;
        let label = describe(spec, t);
        match &eval.occurrence {
            Ok(r) => {
                let (lo, hi) = band(&eval.delta, config.ci_level, |d, l| d.occurrence(l)).map_or((None, None), |(a, b)| (Some(a), Some(b)));
                occurrence.rows.push(vec![Some(t), Some(*r), lo, hi, Some(n_t)]);
            }
            Err(e) if is_degenerate(e) => warnings.push(format!("occurrence ratio skipped at {label}: {e}")),
            Err(e) => return Err(e.clone().into()),
        }
        let pooled = eval.pooled_curve.as_ref().ok().map(sup_distance);
        if let Some(d) = pooled {
            pooled_sup.rows.push(vec![Some(t), Some(d), None, None, Some(n_t)]);
        }
        let binned: Vec<Option<f64>> = eval.binned.iter().map(|c| c.as_ref().map(sup_distance)).collect();
        for (j, d) in binned.iter().enumerate() {
            if let (Some(d), Some(curve)) = (d, &eval.binned[j]) {
                bin_sup[j].rows.push(vec![Some(t), Some(*d), None, None, Some(curve.n_exceedances as f64)]);
            }
        }
        summaries.push(ThresholdSummary {
            spec: *spec,
            value: t,
            n_exceedances: eval.sample.n_exceedances(),
            occurrence_ratio: eval.occurrence.as_ref().ok().copied(),
            sup_distance: pooled,
            binned_sup_distance: binned,
        });
    }
    let occurrence_file = out.table("occurrence.csv", &occurrence)?;
    let mut sup_files = vec![out.table("sup_distance.csv", &pooled_sup)?];
    for (j, table) in bin_sup.iter().enumerate() {
        sup_files.push(out.table(&format!("sup_distance_bin{j}.csv"), table)?);
    }

    if config.plots {
        out.svg("combined.svg", PanelKind::Combined, &format!("{title}: combined ratio"), &combined_files)?;
        out.svg("severity.svg", PanelKind::Severity, &format!("{title}: severity pp-plot"), &severity_files)?;
        out.svg("occurrence.svg", PanelKind::Occurrence, &format!("{title}: occurrence ratio"), &[occurrence_file])?;
        out.svg("sup_distance.svg", PanelKind::SupDistance, &format!("{title}: sup distance"), &sup_files)?;
        for (j, files) in binned_files.iter().enumerate() {
            out.svg(&format!("combined_bin{j}.svg"), PanelKind::Combined, &format!("{title}: combined ratio, bin {}", j + 1), files)?;
        }
        out.svg("marginal.svg", PanelKind::Marginal, &format!("{title}: marginal tail"), &marginal_files)?;
    }

    let mut summary = DiagnoseSummary { n: pairs.len(), thresholds: summaries, outputs: Vec::new(), warnings };
    out.outputs.push(SUMMARY_FILE.to_string());
    summary.outputs = out.outputs;
    let path = out_dir.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(io_error(&path))?;
    Ok(summary)
}
