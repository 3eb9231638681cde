//! Datasets of forecast-observation pairs.
//!
//! The primary format is JSON lines, one record per line:
//!
//! ```text
//! {"y": 1.3, "forecast": "gpd(sigma=1, xi=0.25)", "covariates": {"delta": 0.8}, "threshold": 2}
//! {"y": 0.0, "forecast": [0.1, 0.4, 2.2]}
//! ```
//!
//! `forecast` is either a distribution in the text grammar or a list of
//! ensemble members. Ensemble-only data may instead be a CSV file with
//! columns `y, m1, ..., mK`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_error, HarnessError};
use crate::diagnostics::ForecastObservationPair;
use crate::dists::ForecastDistribution;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    y: f64,
    forecast: ForecastField,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    covariates: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ForecastField {
    Spec(String),
    Members(Vec<f64>),
}

fn parse_error(source_name: &str, line: usize, message: impl ToString) -> HarnessError {
    HarnessError::Parse { source_name: source_name.to_string(), line, message: message.to_string() }
}

fn record_to_pair(record: Record) -> Result<ForecastObservationPair, String> {
    let forecast = match record.forecast {
        ForecastField::Spec(text) => ForecastDistribution::parse(&text).map_err(|e| e.to_string())?,
        ForecastField::Members(members) => ForecastDistribution::ensemble(members).map_err(|e| e.to_string())?,
    };
    let mut pair = ForecastObservationPair::new(forecast, record.y).map_err(|e| e.to_string())?;
    for (name, value) in record.covariates {
        pair = pair.with_covariate(name, value);
    }
    if let Some(t) = record.threshold {
        pair = pair.with_threshold(t).map_err(|e| e.to_string())?;
    }
    Ok(pair)
}

/// Reads JSON-lines records; blank lines are skipped and errors carry the
/// 1-based line number.
pub fn read_jsonl(reader: impl BufRead, source_name: &str) -> Result<Vec<ForecastObservationPair>, HarnessError> {
    let mut pairs = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line.map_err(|e| parse_error(source_name, line_no, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| parse_error(source_name, line_no, e))?;
        pairs.push(record_to_pair(record).map_err(|m| parse_error(source_name, line_no, m))?);
    }
    Ok(pairs)
}

/// Writes one JSON record per pair. Forecasts are printed in the text
/// grammar, so reading the file back reproduces them bit for bit.
pub fn write_jsonl(mut writer: impl Write, pairs: &[ForecastObservationPair]) -> Result<(), HarnessError> {
    for pair in pairs {
        let record = Record {
            y: pair.observation,
            forecast: ForecastField::Spec(pair.forecast.to_string()),
            covariates: pair.covariates.iter().map(|(k, v)| (k.to_string(), v)).collect(),
            threshold: pair.threshold,
        };
        serde_json::to_writer(&mut writer, &record)?;
        writer.write_all(b"\n").map_err(|source| HarnessError::Io { path: "<output>".into(), source })?;
    }
    Ok(())
}

/// Reads an ensemble CSV with header `y, m1, ..., mK`.
pub fn read_ensemble_csv(reader: impl Read, source_name: &str) -> Result<Vec<ForecastObservationPair>, HarnessError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
    let headers = csv.headers().map_err(|e| parse_error(source_name, 1, e))?.clone();
    if headers.get(0) != Some("y") || headers.len() < 2 {
        return Err(parse_error(source_name, 1, "expected header `y,m1,...,mK`"));
    }
    for (k, h) in headers.iter().enumerate().skip(1) {
        if h != format!("m{k}") {
            return Err(parse_error(source_name, 1, format!("column {} should be `m{k}`, found `{h}`", k + 1)));
        }
    }
    let mut pairs = Vec::new();
    for row in csv.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_error(source_name, line, e)
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let values = row
            .iter()
            .map(|field| field.parse::<f64>().map_err(|_| parse_error(source_name, line, format!("`{field}` is not a number"))))
            .collect::<Result<Vec<f64>, _>>()?;
        let forecast = ForecastDistribution::ensemble(values[1..].to_vec()).map_err(|e| parse_error(source_name, line, e))?;
        pairs.push(ForecastObservationPair::new(forecast, values[0]).map_err(|e| parse_error(source_name, line, e))?);
    }
    Ok(pairs)
}

/// Loads a dataset, choosing the format from the extension (`.csv` for
/// ensemble CSV, anything else JSON lines).
pub fn load_dataset(path: &Path) -> Result<Vec<ForecastObservationPair>, HarnessError> {
    let file = File::open(path).map_err(io_error(path))?;
    let name = path.display().to_string();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_ensemble_csv(BufReader::new(file), &name)
    } else {
        read_jsonl(BufReader::new(file), &name)
    }
}

pub fn save_dataset(path: &Path, pairs: &[ForecastObservationPair]) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(io_error(path))?;
    let mut writer = BufWriter::new(file);
    write_jsonl(&mut writer, pairs).map_err(|e| match e {
        HarnessError::Io { source, .. } => HarnessError::Io { path: path.to_path_buf(), source },
        other => other,
    })?;
    writer.flush().map_err(io_error(path))
}
