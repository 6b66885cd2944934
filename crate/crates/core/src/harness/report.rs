use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::OutputConfig;
use super::experiment::{ExperimentResult, MetricRow, Scheme};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 12] = [
    "problem",
    "case",
    "eta",
    "n_samples",
    "w1",
    "w1_ci",
    "floor",
    "moment2",
    "moment6",
    "lambda",
    "sup_grad_u",
    "seed",
];

fn csv_error(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

/// The metric table as CSV text. Floats use the shortest representation
/// that parses back to the same value.
pub fn csv_string(rows: &[MetricRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}

pub fn parse_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_error)?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Config(format!("unexpected CSV header `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

struct Axis {
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, from: f64, to: f64) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v.log10()), b.max(v.log10()))
        });
        if hi - lo < 1e-9 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Axis {
            lo: lo - pad,
            hi: hi + pad,
            from,
            to,
        }
    }

    fn map(&self, v: f64) -> f64 {
        self.from + (v.log10() - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }

    fn decades(&self) -> impl Iterator<Item = i32> {
        (self.lo.ceil() as i32)..=(self.hi.floor() as i32)
    }
}

const COLORS: [(Scheme, &str); 2] = [(Scheme::Transformed, "#1f77b4"), (Scheme::Naive, "#d62728")];

/// Log-log plot of `w1` against `η`: one marker per finite row, one line per
/// scheme for its primary fit, floors as hollow squares. `None` when there
/// is nothing to draw.
pub fn svg_plot(result: &ExperimentResult) -> Option<String> {
    let drawable: Vec<&MetricRow> = result.rows.iter().filter(|r| r.w1.is_finite() && r.w1 > 0.0).collect();
    if drawable.is_empty() {
        return None;
    }
    let (w, h) = (640.0, 440.0);
    let (left, right, top, bottom) = (70.0, 20.0, 30.0, 50.0);
    let x = Axis::new(drawable.iter().map(|r| r.eta), left, w - right);
    let floors = drawable.iter().filter(|r| r.floor > 0.0).map(|r| r.floor);
    let y = Axis::new(drawable.iter().map(|r| r.w1).chain(floors), h - bottom, top);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle">{} ({}): W1 vs step size</text>"#,
        w / 2.0,
        result.problem,
        result.case.label()
    );
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - left - right,
        h - top - bottom
    );
    for k in x.decades() {
        let px = x.map(10f64.powi(k));
        let _ = writeln!(
            s,
            r##"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{top}" stroke="#dddddd"/><text x="{px:.2}" y="{}" text-anchor="middle">1e{k}</text>"##,
            h - bottom,
            h - bottom + 16.0
        );
    }
    for k in y.decades() {
        let py = y.map(10f64.powi(k));
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="#dddddd"/><text x="{}" y="{:.2}" text-anchor="end">1e{k}</text>"##,
            w - right,
            left - 6.0,
            py + 4.0
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">eta</text>"#, w / 2.0, h - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">W1</text>"#,
        h / 2.0,
        h / 2.0
    );

    for (scheme, color) in COLORS {
        let naive = scheme == Scheme::Naive;
        for r in drawable.iter().filter(|r| r.problem.ends_with("/naive") == naive) {
            let _ = writeln!(
                s,
                r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                x.map(r.eta),
                y.map(r.w1)
            );
            if r.floor > 0.0 {
                let (fx, fy) = (x.map(r.eta), y.map(r.floor));
                let _ = writeln!(
                    s,
                    r#"<rect class="floor" x="{:.2}" y="{:.2}" width="6" height="6" fill="none" stroke="{color}"/>"#,
                    fx - 3.0,
                    fy - 3.0
                );
            }
        }
        let fit = result.fits_for(scheme).and_then(|f| f.primary(result.case));
        if let Some(fit) = fit {
            let etas: Vec<f64> = fit.points_used.iter().map(|p| p.0).collect();
            let lo = etas.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = etas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let value = |eta: f64| {
                let base = fit.log_constant + fit.exponent * eta.ln();
                match fit.model {
                    super::fit::RateModel::PurePower => base.exp(),
                    super::fit::RateModel::PowerLog => base.exp() * eta.ln().abs(),
                }
            };
            let pts: Vec<String> = (0..=20)
                .map(|i| {
                    let eta = (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / 20.0).exp();
                    format!("{:.2},{:.2}", x.map(eta), y.map(value(eta)))
                })
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline class="fit" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                pts.join(" ")
            );
            let label = format!("{scheme:?} {:?}: p = {:.3}", fit.model, fit.exponent);
            let ly = top + 16.0 + 16.0 * naive as u8 as f64;
            let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{label}</text>"#, left + 8.0);
        }
    }
    s.push_str("</svg>\n");
    Some(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportPaths {
    pub csv: PathBuf,
    pub plot: Option<PathBuf>,
    pub summary: PathBuf,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the CSV table, the plot (when there is something to draw) and a
/// JSON summary of fits, reports and diagnostics into `dir`.
pub fn emit_report(result: &ExperimentResult, dir: &Path, names: &OutputConfig) -> Result<ReportPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(&names.csv);
    write(&csv, &csv_string(&result.rows)?)?;

    let mut summary_result = result.clone();
    let warnings = &mut summary_result.warnings;
    let plot = match svg_plot(result) {
        Some(svg) => {
            let p = dir.join(&names.plot);
            write(&p, &svg)?;
            Some(p)
        }
        None => {
            warnings.push("nothing to plot: no finite W1 values".into());
            None
        }
    };

    let summary = dir.join(&names.summary);
    let mut json = serde_json::to_string_pretty(&summary_result)
        .map_err(|e| Error::Config(format!("summary: {e}")))?;
    json.push('\n');
    write(&summary, &json)?;
    Ok(ReportPaths { csv, plot, summary })
}
