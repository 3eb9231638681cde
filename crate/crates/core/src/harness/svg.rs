//! Native SVG panels. A panel is built only from CSV tables already on
//! disk, so the plotted numbers are exactly the written numbers.

use std::fmt::Write as _;
use std::path::Path;

use super::output::Table;
use super::{io_error, HarnessError};

const WIDTH: f64 = 420.0;
const HEIGHT: f64 = 360.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 46.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

/// Which reference line and axis conventions a panel uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanelKind {
    /// Combined ratio against `u`, diagonal reference.
    Combined,
    /// Severity pp-plot, diagonal reference on the unit square.
    Severity,
    /// Occurrence ratio against the threshold, reference line at 1.
    Occurrence,
    /// Sup distance against the threshold, reference line at 0.
    SupDistance,
    /// Observed and forecast excess survival against excess size.
    Marginal,
}

impl PanelKind {
    fn axis_labels(self) -> (&'static str, &'static str) {
        match self {
            PanelKind::Combined => ("u", "combined ratio"),
            PanelKind::Severity => ("u", "severity"),
            PanelKind::Occurrence => ("t", "occurrence ratio"),
            PanelKind::SupDistance => ("t", "sup distance"),
            PanelKind::Marginal => ("x", "excess survival ratio"),
        }
    }
}

/// One line on a panel, optionally with a shaded band.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub band: Vec<(f64, f64, f64)>,
    pub dashed: bool,
}

impl PlotSeries {
    /// Reads `x_col` against `value` (and `lower`/`upper` when present).
    pub fn from_table(table: &Table, x_col: &str, y_col: &str, label: impl Into<String>) -> Self {
        let xs = table.column(x_col).unwrap_or_default();
        let ys = table.column(y_col).unwrap_or_default();
        let lo = table.column("lower");
        let hi = table.column("upper");
        let mut points = Vec::new();
        let mut band = Vec::new();
        for (i, (x, y)) in xs.iter().zip(&ys).enumerate() {
            if let (Some(x), Some(y)) = (x, y) {
                if x.is_finite() && y.is_finite() {
                    points.push((*x, *y));
                }
                if let (Some(lo), Some(hi)) = (&lo, &hi) {
                    if let (Some(l), Some(h)) = (lo[i], hi[i]) {
                        band.push((*x, l, h));
                    }
                }
            }
        }
        Self { label: label.into(), points, band, dashed: false }
    }
}

/// Default legend label: the quantile level when recorded, else the
/// threshold.
pub fn table_label(table: &Table, fallback: &str) -> String {
    match (table.meta("level"), table.meta("threshold"), table.meta("label")) {
        (_, _, Some(label)) => label.to_string(),
        (Some(level), Some(t), None) => format!("α={level} (t={})", short(t)),
        (None, Some(t), None) => format!("t={}", short(t)),
        _ => fallback.to_string(),
    }
}

fn short(text: &str) -> String {
    text.parse::<f64>().map(|v| format!("{v:.4}")).unwrap_or_else(|_| text.to_string())
        .trim_end_matches('0')
        .trim_end_matches('.')
        .to_string()
}

pub fn render(kind: PanelKind, title: &str, series: &[PlotSeries]) -> String {
    let all = series.iter().flat_map(|s| {
        s.points.iter().map(|p| (p.0, p.1)).chain(s.band.iter().flat_map(|b| [(b.0, b.1), (b.0, b.2)]))
    });
    let (mut x_min, mut x_max, mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for (x, y) in all {
        if x.is_finite() && y.is_finite() {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    match kind {
        PanelKind::Combined | PanelKind::Severity => {
            x_min = 0.0;
            x_max = 1.0;
            y_max = y_max.max(1.0);
        }
        PanelKind::Occurrence => y_max = y_max.max(1.2),
        PanelKind::Marginal => y_max = y_max.max(1.0),
        PanelKind::SupDistance => y_max = y_max.max(0.05),
    }
    if !(x_min.is_finite() && x_max.is_finite()) {
        x_min = 0.0;
        x_max = 1.0;
    }
    if x_max <= x_min {
        x_max = x_min + 1.0;
    }
    if !y_max.is_finite() || y_max <= y_min {
        y_max = y_min + 1.0;
    }
    y_max *= 1.05;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| MARGIN_TOP + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, WIDTH / 2.0, escape(title));

    // Axes and ticks.
    let (x_label, y_label) = kind.axis_labels();
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        let (px, py) = (sx(fx), sy(fy));
        let bottom = MARGIN_TOP + plot_h;
        let _ = writeln!(svg, r#"<line x1="{px:.2}" y1="{bottom}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, bottom + 4.0);
        let _ = writeln!(svg, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, bottom + 16.0, tick(fx));
        let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{py:.2}" x2="{MARGIN_LEFT}" y2="{py:.2}" stroke="black"/>"#, MARGIN_LEFT - 4.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, MARGIN_LEFT - 6.0, py + 4.0, tick(fy));
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{y_label}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );

    // Reference line.
    let reference = match kind {
        PanelKind::Combined | PanelKind::Severity => Some(((0.0, 0.0), (1.0, 1.0))),
        PanelKind::Occurrence => Some(((x_min, 1.0), (x_max, 1.0))),
        PanelKind::SupDistance => Some(((x_min, 0.0), (x_max, 0.0))),
        PanelKind::Marginal => Some(((x_min, 1.0), (x_max, 1.0))),
    };
    if let Some(((x0, y0), (x1, y1))) = reference {
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#555" stroke-dasharray="4 3"/>"##,
            sx(x0),
            sy(y0),
            sx(x1),
            sy(y1)
        );
    }

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !s.band.is_empty() {
            let mut path = String::new();
            for (x, lo, _) in &s.band {
                let _ = write!(path, "{:.2},{:.2} ", sx(*x), sy(lo.max(y_min).min(y_max)));
            }
            for (x, _, hi) in s.band.iter().rev() {
                let _ = write!(path, "{:.2},{:.2} ", sx(*x), sy(hi.max(y_min).min(y_max)));
            }
            let _ = writeln!(svg, r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#, path.trim_end());
        }
        let mut path = String::new();
        for (x, y) in &s.points {
            let _ = write!(path, "{:.2},{:.2} ", sx(*x), sy(*y));
        }
        let dash = if s.dashed { r#" stroke-dasharray="6 3""# } else { "" };
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>"#,
            path.trim_end()
        );
        let ly = MARGIN_TOP + 14.0 + 14.0 * i as f64;
        let lx = MARGIN_LEFT + 10.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>"#, lx + 18.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 22.0, ly + 4.0, escape(&s.label));
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Draws one panel from CSV files; every file becomes one series.
pub fn render_files(kind: PanelKind, title: &str, files: &[&Path], out: &Path) -> Result<(), HarnessError> {
    let series = files
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let table = Table::read(path)?;
            let label = table_label(&table, &format!("series {}", i + 1));
            Ok(match kind {
                PanelKind::Combined | PanelKind::Severity => PlotSeries::from_table(&table, "u", "value", label),
                PanelKind::Occurrence | PanelKind::SupDistance => PlotSeries::from_table(&table, "t", "value", label),
                PanelKind::Marginal => PlotSeries::from_table(&table, "x", "observed", label),
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let mut series = series;
    if kind == PanelKind::Marginal {
        // Forecast side drawn dashed next to each observed curve.
        let mut both = Vec::new();
        for (s, path) in series.into_iter().zip(files) {
            let table = Table::read(path)?;
            let mut f = PlotSeries::from_table(&table, "x", "forecast", format!("{} forecast", s.label));
            f.dashed = true;
            both.push(s);
            both.push(f);
        }
        series = both;
    }
    std::fs::write(out, render(kind, title, &series)).map_err(io_error(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panel_contains_reference_band_and_lines() {
        let mut table = Table::new(&["u", "value", "lower", "upper", "n_exceedances"]).with_meta("threshold", 0.5);
        for i in 0..=4 {
            let u = i as f64 / 4.0;
            table.rows.push(vec![Some(u), Some(u), Some(u - 0.1), Some(u + 0.1), Some(10.0)]);
        }
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("c.csv");
        let svg = dir.path().join("c.svg");
        table.write(&csv).unwrap();
        let before = std::fs::read(&csv).unwrap();
        render_files(PanelKind::Combined, "combined <ratio>", &[&csv], &svg).unwrap();
        assert_eq!(std::fs::read(&csv).unwrap(), before);
        let text = std::fs::read_to_string(&svg).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("<polyline"));
        assert!(text.contains("<polygon"));
        assert!(text.contains("stroke-dasharray"));
        assert!(text.contains("t=0.5"));
        assert!(text.contains("combined &lt;ratio&gt;"));
    }
}
