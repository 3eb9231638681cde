//! Subcommand implementations. Each command writes a manifest beside its
//! outputs.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use tailcal::diagnostics::{resolve_thresholds, PitRandomizer, ThresholdSpec};
use tailcal::harness::repro::{recipe, CASE_STUDY_FIGURES};
use tailcal::harness::{load_dataset, run_diagnose, save_dataset, BinConfig, HarnessError, Manifest, RunConfig, FIGURES};
use tailcal::inference::{binomial_occurrence_test, ks_excess_pit_test};
use tailcal::scoring::{emos_fit as fit_emos, EmosFamily, EmosSample, NelderMeadOptions, ScoringError};
use tailcal::simlab::{simulate as run_simulation, Scenario, ScenarioParams};
use tailcal::{EmosModel, ForecastObservationPair, ScenarioSpec};

use crate::{
    CliError, DiagnoseArgs, EmosFitArgs, EmosPredictArgs, ReproArgs, SimulateArgs, TestArgs, TestKind,
};

type CliResult = Result<(), CliError>;

fn usage(msg: impl ToString) -> CliError {
    CliError::Usage(msg.to_string())
}

fn harness(e: impl Into<HarnessError>) -> CliError {
    CliError::from(e.into())
}

/// Directory holding `file`, for manifests written next to a single output.
fn parent_dir(file: &Path) -> PathBuf {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).map_err(harness)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn simulate(args: SimulateArgs) -> CliResult {
    let params = ScenarioParams { gamma: args.gamma, nu: args.nu, xi: args.xi, eta: args.eta, sigma_f: args.sigma_f };
    let scenario = Scenario::from_name(&args.scenario, &params).map_err(|e| {
        usage(format!("{e}; known scenarios: {}", Scenario::NAMES.join(", ")))
    })?;
    let spec = ScenarioSpec::new(scenario, args.n, args.seed);
    let sim = run_simulation(&spec).map_err(harness)?;
    let marginal = scenario.marginal_description().map_err(harness)?;
    create_dir(&args.out)?;
    let mut outputs = Vec::new();
    for stream in &sim.streams {
        let name = format!("{}.jsonl", stream.forecaster);
        save_dataset(&args.out.join(&name), &stream.pairs).map_err(harness)?;
        outputs.push(name);
    }
    let config = json!({ "spec": spec, "marginal_law": marginal });
    let mut manifest = Manifest::new("simulate", Some(args.seed), &config).map_err(harness)?;
    manifest.outputs = outputs.clone();
    manifest.write(&args.out).map_err(harness)?;
    println!("marginal law of Y: {marginal}");
    for name in outputs {
        println!("wrote {}", args.out.join(name).display());
    }
    Ok(())
}

fn threshold_specs(quantiles: Option<&[f64]>, values: Option<&[f64]>) -> Vec<ThresholdSpec> {
    if quantiles.is_none() && values.is_none() {
        return [0.9, 0.99, 0.995].map(ThresholdSpec::Quantile).to_vec();
    }
    let q = quantiles.unwrap_or_default().iter().map(|&l| ThresholdSpec::Quantile(l));
    let v = values.unwrap_or_default().iter().map(|&t| ThresholdSpec::Value(t));
    q.chain(v).collect()
}

pub fn diagnose(args: DiagnoseArgs) -> CliResult {
    let config = RunConfig {
        thresholds: threshold_specs(args.threshold_quantiles.as_deref(), args.thresholds.as_deref()),
        series_thresholds: args
            .series_quantiles
            .as_ref()
            .map(|levels| levels.iter().map(|&l| ThresholdSpec::Quantile(l)).collect()),
        u_grid_points: args.grid_points,
        bins: args.bin_covariate.clone().zip(args.bins).map(|(covariate, bins)| BinConfig { covariate, bins }),
        ci_level: args.ci,
        marginal: args.marginal,
        seed: args.seed,
        plots: !args.no_plots,
    };
    config.validate().map_err(harness)?;
    let pairs = load_dataset(&args.dataset).map_err(harness)?;
    let title = args.title.clone().unwrap_or_else(|| {
        args.dataset.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    });
    let summary = run_diagnose(&pairs, &config, &args.out, &title).map_err(harness)?;
    let echo = json!({ "dataset": args.dataset, "title": title, "run": config });
    let mut manifest = Manifest::new("diagnose", Some(args.seed), &echo).map_err(harness)?;
    manifest.outputs = summary.outputs.clone();
    manifest.write(&args.out).map_err(harness)?;

    println!("n = {}", summary.n);
    for t in &summary.thresholds {
        let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        println!(
            "t = {:.6} ({:?}): exceedances {}, occurrence ratio {}, sup distance {}",
            t.value,
            t.spec,
            t.n_exceedances,
            show(t.occurrence_ratio),
            show(t.sup_distance)
        );
    }
    println!("outputs in {}", args.out.display());
    if summary.degenerate() {
        for w in &summary.warnings {
            eprintln!("warning: {w}");
        }
        return Err(CliError::Degenerate(format!("{} diagnostics skipped", summary.warnings.len())));
    }
    Ok(())
}

pub fn test(args: TestArgs) -> CliResult {
    let pairs = load_dataset(&args.dataset).map_err(harness)?;
    let spec = match (args.threshold, args.threshold_quantile) {
        (Some(t), _) => ThresholdSpec::Value(t),
        (None, Some(level)) => ThresholdSpec::Quantile(level),
        (None, None) => return Err(usage("a threshold is required")),
    };
    let t = resolve_thresholds(&pairs, &[spec]).map_err(harness)?[0];
    let report = match args.kind {
        TestKind::Ks => ks_excess_pit_test(&pairs, t, &PitRandomizer::new(args.seed)),
        TestKind::Binomial => binomial_occurrence_test(&pairs, t),
    }
    .map_err(harness)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(harness)?);
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_json(&out.join("report.json"), &report)?;
        let echo = json!({ "dataset": args.dataset, "kind": args.kind, "threshold": spec, "threshold_value": t });
        let mut manifest = Manifest::new("test", Some(args.seed), &echo).map_err(harness)?;
        manifest.outputs = vec!["report.json".into()];
        manifest.write(out).map_err(harness)?;
    }
    Ok(())
}

fn ensemble_rows(pairs: &[ForecastObservationPair]) -> Result<Vec<EmosSample>, CliError> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| match p.forecast.ensemble_members() {
            Some(members) => Ok(EmosSample::from_members(members, p.observation)),
            None => Err(usage(format!("record {}: EMOS needs an ensemble forecast, got {}", i + 1, p.forecast))),
        })
        .collect()
}

fn initial_model(family: EmosFamily, init: Option<&[f64]>, censor_point: f64) -> Result<EmosModel, CliError> {
    let model = match (family, init) {
        (EmosFamily::CensoredLogistic, None) => EmosModel::censored_logistic(0.0, 1.0, 1.0, 0.0),
        (EmosFamily::CensoredGev, None) => EmosModel::censored_gev(0.0, 1.0, 1.0, 0.0, 0.1),
        (EmosFamily::CensoredLogistic, Some(&[a, b, c, d])) => EmosModel::censored_logistic(a, b, c, d),
        (EmosFamily::CensoredGev, Some(&[a, b, c, d, shape])) => EmosModel::censored_gev(a, b, c, d, shape),
        (_, Some(values)) => {
            let expected = 4 + (family == EmosFamily::CensoredGev) as usize;
            return Err(usage(format!("--init for {} takes {expected} values, got {}", family.name(), values.len())));
        }
    };
    let model = EmosModel { censor_point, ..model };
    model.validate().map_err(harness)?;
    Ok(model)
}

pub fn emos_fit(args: EmosFitArgs) -> CliResult {
    let family: EmosFamily = args.family.replace('-', "_").parse().map_err(|e: ScoringError| usage(e))?;
    let init = initial_model(family, args.init.as_deref(), args.censor_point)?;
    let pairs = load_dataset(&args.training).map_err(harness)?;
    let rows = ensemble_rows(&pairs)?;
    let options = NelderMeadOptions { budget: args.budget, ..NelderMeadOptions::default() };
    let fit = fit_emos(&rows, &init, &options).map_err(harness)?;
    create_dir(&parent_dir(&args.out))?;
    write_json(&args.out, &fit.model)?;
    let echo = json!({
        "training": args.training,
        "init": init,
        "options": { "budget": options.budget, "tolerance": options.tolerance, "initial_step": options.initial_step },
        "objective": fit.objective,
        "evaluations": fit.evaluations,
        "converged": fit.converged,
    });
    let mut manifest = Manifest::new("emos fit", None, &echo).map_err(harness)?;
    manifest.outputs = vec![file_name(&args.out)];
    manifest.write(&parent_dir(&args.out)).map_err(harness)?;
    println!(
        "{}: mean CRPS {:.6} after {} evaluations (converged: {})",
        args.out.display(),
        fit.objective,
        fit.evaluations,
        fit.converged
    );
    Ok(())
}

pub fn emos_predict(args: EmosPredictArgs) -> CliResult {
    let text = std::fs::read_to_string(&args.model).map_err(|e| usage(format!("{}: {e}", args.model.display())))?;
    let model: EmosModel =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", args.model.display())))?;
    model.validate().map_err(harness)?;
    let pairs = load_dataset(&args.data).map_err(harness)?;
    let rows = ensemble_rows(&pairs)?;
    let predicted = pairs
        .iter()
        .zip(&rows)
        .map(|(pair, row)| {
            let forecast = model.predict(row.mean, row.sd).map_err(harness)?;
            let mut out = ForecastObservationPair::new(forecast, pair.observation).map_err(harness)?;
            out.covariates = pair.covariates.clone();
            out.threshold = pair.threshold;
            Ok(out)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    create_dir(&parent_dir(&args.out))?;
    save_dataset(&args.out, &predicted).map_err(harness)?;
    let echo = json!({ "model_file": args.model, "model": model, "data": args.data });
    let mut manifest = Manifest::new("emos predict", None, &echo).map_err(harness)?;
    manifest.outputs = vec![file_name(&args.out)];
    manifest.write(&parent_dir(&args.out)).map_err(harness)?;
    println!("wrote {} predictive distributions to {}", predicted.len(), args.out.display());
    Ok(())
}

pub fn repro(args: ReproArgs) -> CliResult {
    if args.list {
        for id in FIGURES {
            let r = recipe(id, 0).map_err(harness)?;
            println!("{id}: {}", r.description);
        }
        for id in CASE_STUDY_FIGURES {
            println!("{id}: not reproducible (case-study data not distributed)");
        }
        return Ok(());
    }
    let figure = args.figure.as_deref().ok_or_else(|| usage("a figure id is required"))?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(format!("repro-{figure}")));
    let summary = tailcal::harness::repro(figure, args.n, args.seed, &out).map_err(harness)?;
    for (forecaster, s) in &summary.forecasters {
        let sups: Vec<String> = s
            .thresholds
            .iter()
            .map(|t| t.sup_distance.map_or_else(|| "-".into(), |v| format!("{v:.4}")))
            .collect();
        println!("{forecaster}: sup distance by threshold [{}]", sups.join(", "));
    }
    println!("outputs in {}", out.display());
    if summary.degenerate() {
        return Err(CliError::Degenerate("some diagnostics were skipped; see summary.json".into()));
    }
    Ok(())
}
