//! CSV tables for curves and threshold series.
//!
//! Each file starts with `# key=value` metadata lines (threshold, kind,
//! quantile level) followed by a header and numeric rows. Curves use columns
//! `u, value, lower, upper, n_exceedances`; threshold series use `t` in
//! place of `u`. Missing band values are empty fields.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use super::{io_error, HarnessError};
use crate::diagnostics::{CurveKind, DiagnosticCurve, MarginalTailCurve, RatioSeries, SeriesKind};

/// A numeric CSV table with its metadata lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { meta: Vec::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        let file = File::create(path).map_err(io_error(path))?;
        let mut out = BufWriter::new(file);
        for (k, v) in &self.meta {
            writeln!(out, "# {k}={v}").map_err(io_error(path))?;
        }
        let mut csv = csv::Writer::from_writer(out);
        csv.write_record(&self.columns)?;
        for row in &self.rows {
            csv.write_record(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()))?;
        }
        csv.flush().map_err(io_error(path))
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(io_error(path))?;
        let meta = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .filter_map(|l| l[1..].trim().split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        let file = File::open(path).map_err(io_error(path))?;
        let mut csv = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(BufReader::new(file));
        let columns = csv.headers()?.iter().map(str::to_string).collect();
        let name = path.display().to_string();
        let mut rows = Vec::new();
        for record in csv.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let row = record
                .iter()
                .map(|f| {
                    if f.is_empty() {
                        Ok(None)
                    } else {
                        f.parse::<f64>().map(Some).map_err(|_| HarnessError::Parse {
                            source_name: name.clone(),
                            line,
                            message: format!("`{f}` is not a number"),
                        })
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Self { meta, columns, rows })
    }
}

pub fn curve_kind_name(kind: CurveKind) -> &'static str {
    match kind {
        CurveKind::Combined => "combined",
        CurveKind::Severity => "severity",
        CurveKind::Marginal => "marginal",
    }
}

pub fn series_kind_name(kind: SeriesKind) -> &'static str {
    match kind {
        SeriesKind::Occurrence => "occurrence",
        SeriesKind::SupDistance => "sup_distance",
    }
}

pub fn curve_table(curve: &DiagnosticCurve) -> Table {
    let mut table = Table::new(&["u", "value", "lower", "upper", "n_exceedances"])
        .with_meta("kind", curve_kind_name(curve.kind))
        .with_meta("threshold", curve.threshold);
    for (i, (&u, &v)) in curve.grid.iter().zip(&curve.values).enumerate() {
        let (lo, hi) = band_at(&curve.band, i);
        table.rows.push(vec![Some(u), Some(v), lo, hi, Some(curve.n_exceedances as f64)]);
    }
    table
}

pub fn series_table(series: &RatioSeries) -> Table {
    let mut table =
        Table::new(&["t", "value", "lower", "upper", "n_exceedances"]).with_meta("kind", series_kind_name(series.kind));
    for (i, (&t, &v)) in series.thresholds.iter().zip(&series.values).enumerate() {
        let (lo, hi) = band_at(&series.band, i);
        table.rows.push(vec![Some(t), Some(v), lo, hi, Some(series.n_exceedances[i] as f64)]);
    }
    table
}

pub fn marginal_table(curve: &MarginalTailCurve) -> Table {
    let mut table = Table::new(&["x", "observed", "forecast", "n_exceedances"])
        .with_meta("kind", "marginal")
        .with_meta("threshold", curve.threshold)
        .with_meta("sup_distance", curve.sup_distance);
    for ((&x, &o), &f) in curve.grid.iter().zip(&curve.observed).zip(&curve.forecast) {
        table.rows.push(vec![Some(x), Some(o), Some(f), Some(curve.n_exceedances as f64)]);
    }
    table
}

fn band_at(band: &Option<Vec<(f64, f64)>>, i: usize) -> (Option<f64>, Option<f64>) {
    match band {
        Some(b) => {
            let (lo, hi) = b[i];
            (lo.is_finite().then_some(lo), hi.is_finite().then_some(hi))
        }
        None => (None, None),
    }
}
