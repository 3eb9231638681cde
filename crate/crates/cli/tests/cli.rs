use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn tailcal(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tailcal")).args(args).current_dir(cwd).output().expect("run tailcal")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

type Meta = Vec<(String, String)>;
type Rows = Vec<Vec<(String, f64)>>;

/// Rows of a written curve CSV keyed by header name, skipping `#` metadata.
fn read_curve(path: &Path) -> (Meta, Rows) {
    let text = fs::read_to_string(path).unwrap();
    let mut meta = Vec::new();
    let mut lines = text.lines().filter(|l| {
        if let Some(kv) = l.strip_prefix("# ") {
            let (k, v) = kv.split_once('=').unwrap();
            meta.push((k.to_string(), v.to_string()));
            false
        } else {
            true
        }
    });
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| {
            header
                .iter()
                .zip(l.split(','))
                .filter(|(_, v)| !v.is_empty())
                .map(|(h, v)| (h.clone(), v.parse().unwrap()))
                .collect()
        })
        .collect();
    (meta, rows)
}

fn three_uniform_pairs(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("three.jsonl");
    let lines: Vec<String> = [0.2, 0.6, 0.9]
        .iter()
        .map(|y| format!(r#"{{"y":{y},"forecast":"uniform(lower=0, upper=1)"}}"#))
        .collect();
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

#[test]
fn simulate_is_byte_identical_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        ["simulate", "exponential-trio", "--gamma", "0.25", "--nu", "1.4", "--n", "1000", "--seed", "7", "--out", out]
    };
    for out in ["a", "b"] {
        let run = tailcal(&args(out), dir.path());
        assert_eq!(code(&run), 0, "{}", stderr(&run));
        assert!(String::from_utf8_lossy(&run.stdout).contains("gpd(sigma=1, xi=0.25)"));
    }
    for name in ["ideal.jsonl", "climatological.jsonl", "extremist.jsonl", "manifest.json"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
    let manifest: Value = serde_json::from_slice(&fs::read(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["spec"]["n"], 1000);
    assert!(manifest["version"].is_string());
}

#[test]
fn misinformed_output_has_both_rate_covariates() {
    let dir = tempfile::tempdir().unwrap();
    let run = tailcal(&["simulate", "misinformed", "--n", "5", "--out", "m"], dir.path());
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let text = fs::read_to_string(dir.path().join("m/misinformed.jsonl")).unwrap();
    for line in text.lines() {
        let record: Value = serde_json::from_str(line).unwrap();
        assert!(record["covariates"]["delta1"].is_number());
        assert!(record["covariates"]["delta2"].is_number());
    }
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = tailcal(&["simulate", "no-such-thing"], dir.path());
    assert_eq!(code(&run), 2);
    assert!(stderr(&run).contains("no-such-thing"));
}

#[test]
fn diagnose_hand_enumerated_curve() {
    let dir = tempfile::tempdir().unwrap();
    let data = three_uniform_pairs(dir.path());
    let run = tailcal(
        &["diagnose", data.to_str().unwrap(), "--thresholds", "0.5", "--grid-points", "3", "--out", "d"],
        dir.path(),
    );
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let (_, rows) = read_curve(&dir.path().join("d/combined_t0.csv"));
    let at = |u: f64| {
        let row = rows.iter().find(|r| r.iter().any(|(h, v)| h == "u" && *v == u)).unwrap();
        row.iter().find(|(h, _)| h == "value").unwrap().1
    };
    assert!((at(0.5) - 2.0 / 3.0).abs() < 1e-15);
    assert!((at(1.0) - 4.0 / 3.0).abs() < 1e-15);
    assert!(dir.path().join("d/manifest.json").exists());
    assert!(dir.path().join("d/combined.svg").exists());
}

#[test]
fn quantile_threshold_is_echoed_in_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ten.jsonl");
    let lines: Vec<String> =
        (1..=10).map(|y| format!(r#"{{"y":{y},"forecast":"uniform(lower=0, upper=11)"}}"#)).collect();
    fs::write(&path, lines.join("\n")).unwrap();
    let run = tailcal(&["diagnose", "ten.jsonl", "--threshold-quantiles", "0.9", "--out", "d"], dir.path());
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let (meta, _) = read_curve(&dir.path().join("d/combined_t0.csv"));
    let threshold: f64 = meta.iter().find(|(k, _)| k == "threshold").unwrap().1.parse().unwrap();
    // Type-7 quantile of 1..=10 at 0.9: 9 + 0.1.
    assert!((threshold - 9.1).abs() < 1e-12);
}

#[test]
fn empty_threshold_list_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = three_uniform_pairs(dir.path());
    let run = tailcal(&["diagnose", data.to_str().unwrap(), "--thresholds"], dir.path());
    assert_eq!(code(&run), 2);
    assert!(stderr(&run).contains("empty"));
}

#[test]
fn parse_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    fs::write(&path, "{\"y\":1,\"forecast\":\"normal(mu=0, sigma=1)\"}\n{\"y\":2,\"forecast\":\"normal(mu=0)\"}\n").unwrap();
    let run = tailcal(&["diagnose", "bad.jsonl", "--thresholds", "0"], dir.path());
    assert_eq!(code(&run), 2);
    assert!(stderr(&run).contains("bad.jsonl:2"), "{}", stderr(&run));
}

#[test]
fn plots_do_not_change_csv_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let sim = tailcal(&["simulate", "exponential-trio", "--n", "2000", "--seed", "3", "--out", "s"], dir.path());
    assert_eq!(code(&sim), 0);
    let common = ["diagnose", "s/extremist.jsonl", "--threshold-quantiles", "0.5,0.9", "--ci", "0.9"];
    let with = tailcal(&[&common[..], &["--out", "with"]].concat(), dir.path());
    let without = tailcal(&[&common[..], &["--out", "without", "--no-plots"]].concat(), dir.path());
    assert_eq!(code(&with), 0);
    assert_eq!(code(&without), 0);
    let mut compared = 0;
    for entry in fs::read_dir(dir.path().join("without")).unwrap() {
        let name = entry.unwrap().file_name();
        if Path::new(&name).extension().is_some_and(|e| e == "csv") {
            let a = fs::read(dir.path().join("with").join(&name)).unwrap();
            let b = fs::read(dir.path().join("without").join(&name)).unwrap();
            assert_eq!(a, b);
            compared += 1;
        }
    }
    assert!(compared >= 4);
    assert!(!dir.path().join("without/combined.svg").exists());
}

#[test]
fn test_command_prints_report_json() {
    let dir = tempfile::tempdir().unwrap();
    let data = three_uniform_pairs(dir.path());
    let run = tailcal(&["test", data.to_str().unwrap(), "--kind", "ks", "--threshold", "0.5", "--out", "r"], dir.path());
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let report: Value = serde_json::from_slice(&run.stdout).unwrap();
    // Excess PITs {0.2, 0.8}: D = max(0.2, 0.5 - 0.2, 0.8 - 0.5, 1 - 0.8) = 0.3.
    assert!((report["statistic"].as_f64().unwrap() - 0.3).abs() < 1e-12);
    assert_eq!(report["n"], 2);
    assert!(report["null"].is_string());
    assert!(report["p_value"].as_f64().unwrap() > 0.0);
    assert!(dir.path().join("r/report.json").exists());
    assert!(dir.path().join("r/manifest.json").exists());
}

#[test]
fn missing_dataset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let run = tailcal(&["test", "missing.jsonl", "--kind", "binomial", "--threshold", "1"], dir.path());
    assert_eq!(code(&run), 2);
    assert!(stderr(&run).contains("missing.jsonl"));
}

#[test]
fn degenerate_diagnostic_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let data = three_uniform_pairs(dir.path());
    let run = tailcal(&["test", data.to_str().unwrap(), "--kind", "ks", "--threshold", "0.95"], dir.path());
    assert_eq!(code(&run), 1, "{}", stderr(&run));
    let run = tailcal(&["diagnose", data.to_str().unwrap(), "--thresholds", "0.5,2", "--out", "d"], dir.path());
    assert_eq!(code(&run), 1, "{}", stderr(&run));
    assert!(dir.path().join("d/combined_t0.csv").exists());
}

#[test]
fn emos_fit_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("y,m1,m2,m3\n");
    for i in 0..60 {
        let x = i as f64 / 6.0;
        let spread = 0.2 + (i % 7) as f64 * 0.1;
        let y = (x + ((i * 37) % 11) as f64 / 5.0 - 1.0).max(0.0);
        csv.push_str(&format!("{y},{},{},{}\n", x - spread, x, x + spread));
    }
    fs::write(dir.path().join("train.csv"), csv).unwrap();
    let fit = tailcal(&["emos", "fit", "train.csv", "--out", "model/m.json", "--budget", "400"], dir.path());
    assert_eq!(code(&fit), 0, "{}", stderr(&fit));
    let model: Value = serde_json::from_slice(&fs::read(dir.path().join("model/m.json")).unwrap()).unwrap();
    assert_eq!(model["family"], "censored_logistic");
    assert!(dir.path().join("model/manifest.json").exists());

    let predict = tailcal(&["emos", "predict", "--model", "model/m.json", "train.csv", "--out", "p/pred.jsonl"], dir.path());
    assert_eq!(code(&predict), 0, "{}", stderr(&predict));
    let text = fs::read_to_string(dir.path().join("p/pred.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 60);
    assert!(text.lines().all(|l| l.contains("censored_below(logistic(")));

    let wrong = tailcal(&["emos", "fit", "p/pred.jsonl"], dir.path());
    assert_eq!(code(&wrong), 2);
}

#[test]
fn repro_small_figure_and_case_study() {
    let dir = tempfile::tempdir().unwrap();
    let run = tailcal(&["repro", "sim-unfocused", "--n", "5000", "--seed", "1", "--out", "fig"], dir.path());
    assert!(code(&run) == 0 || code(&run) == 1, "{}", stderr(&run));
    assert!(dir.path().join("fig/manifest.json").exists());
    let case = tailcal(&["repro", "cs-pit"], dir.path());
    assert_eq!(code(&case), 2);
    let unknown = tailcal(&["repro", "fig-99"], dir.path());
    assert_eq!(code(&unknown), 2);
}
