//! Report documents, CSV tables and SVG plots written by a run.

use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::MeshStats;

pub const SCHEMA_VERSION: u32 = 1;
pub const SCHEMA: &str = include_str!("../schema/report.schema.json");
pub const MANIFEST: &str = "manifest.json";
pub const FAILURES: &str = "failures.json";
pub const CONFIG_COPY: &str = "config.json";
pub const SCHEMA_FILE: &str = "report.schema.json";

/// One named invariant evaluated on the run's data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub bound: Option<f64>,
    pub detail: String,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, value: None, bound: None, detail: detail.into() }
    }

    /// Passes when `value <= bound`.
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= bound,
            value: finite(value),
            bound: finite(bound),
            detail: format!("{value:e} <= {bound:e}"),
        }
    }

    /// Passes when `value >= bound`.
    pub fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= bound,
            value: finite(value),
            bound: finite(bound),
            detail: format!("{value:e} >= {bound:e}"),
        }
    }

    /// Passes when `value` is finite and positive.
    pub fn finite_positive(name: &str, value: f64) -> Self {
        Self {
            name: name.into(),
            passed: value.is_finite() && value > 0.0,
            value: finite(value),
            bound: None,
            detail: format!("{value:e} finite and positive"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub experiment: String,
    pub config_sha256: String,
    pub domain: String,
    pub mesh: MeshStats,
    pub status: String,
    pub checks: Vec<Check>,
    /// Data files written next to the report.
    pub files: Vec<String>,
    pub data: Value,
}

impl Report {
    pub fn new(experiment: &str, config_sha256: &str, domain: &str, mesh: MeshStats, checks: Vec<Check>, files: Vec<String>, data: Value) -> Self {
        let status = if checks.iter().all(|c| c.passed) { "pass" } else { "fail" };
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.into(),
            config_sha256: config_sha256.into(),
            domain: domain.into(),
            mesh,
            status: status.into(),
            checks,
            files,
            data,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == "pass"
    }

    pub fn file_name(experiment: &str) -> String {
        format!("{experiment}.json")
    }
}

/// A violated invariant or a failed experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub experiment: String,
    /// Invariant name, or the error kind when the experiment did not finish.
    pub invariant: String,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub config_sha256: String,
    pub domain: String,
    pub experiments: Vec<String>,
    pub reports: Vec<String>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FailureManifest {
    pub schema_version: u32,
    pub config_sha256: String,
    pub failures: Vec<Failure>,
}

/// Validates a report document against the published schema.
pub fn validate_report(doc: &Value) -> Result<()> {
    let schema: Value = serde_json::from_str(SCHEMA).expect("bundled schema is JSON");
    let validator = jsonschema::validator_for(&schema).expect("bundled schema compiles");
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| format!("{}: {e}", e.instance_path())).collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::Parse(format!("report violates the schema: {}", errors.join("; "))))
    }
}

/// Serialized output directory. All writes go through here so a run's file
/// list is known.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::from(e).context(format!("creating {}", root.display())))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        fs::write(self.path(name), text).map_err(|e| Error::from(e).context(format!("writing {name}")))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// CSV with a header row; every float printed in shortest round-trip form.
    pub fn write_csv(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_path(self.path(name)).map_err(|e| Error::from(e))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_report(&self, report: &Report) -> Result<()> {
        let doc = serde_json::to_value(report)?;
        validate_report(&doc)?;
        self.write_json(&Report::file_name(&report.experiment), report)
    }
}

pub fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Line series on a log-scaled y axis.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [RGBColor; 4] = [RGBColor(31, 119, 180), RGBColor(214, 39, 40), RGBColor(44, 160, 44), RGBColor(148, 103, 189)];

fn plot_error<E: std::fmt::Display>(e: E) -> Error {
    Error::InvalidArgument(format!("plot: {e}"))
}

/// SVG line plot of positive values against `x`, log scale in `y`.
pub fn log_line_plot(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<()> {
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).filter(|p| p.1 > 0.0 && p.1.is_finite()).collect();
    if pts.is_empty() {
        return Err(Error::InvalidArgument(format!("plot `{title}` has no positive data")));
    }
    let (x0, x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y0, y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let x1 = if x1 > x0 { x1 } else { x0 + 1.0 };
    let (y0, y1) = if y1 > y0 { (y0 / 2.0, y1 * 2.0) } else { (y0 / 10.0, y0 * 10.0) };
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_error)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x0..x1, (y0..y1).log_scale())
        .map_err(plot_error)?;
    chart.configure_mesh().x_desc(x_label).y_desc(y_label).draw().map_err(plot_error)?;
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let data: Vec<(f64, f64)> = s.points.iter().copied().filter(|p| p.1 > 0.0 && p.1.is_finite()).collect();
        chart
            .draw_series(LineSeries::new(data, color.stroke_width(2)))
            .map_err(plot_error)?
            .label(s.label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(plot_error)?;
    root.present().map_err(plot_error)?;
    Ok(())
}

/// SVG heatmap of `log10 values[row][col]`; non-positive cells are grey.
pub fn log_heatmap(path: &Path, title: &str, x_label: &str, y_label: &str, values: &[Vec<f64>]) -> Result<()> {
    let rows = values.len();
    let cols = values.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(format!("heatmap `{title}` is empty")));
    }
    let logs: Vec<f64> = values.iter().flatten().filter(|v| **v > 0.0 && v.is_finite()).map(|v| v.log10()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_error)?;
    let caption = format!("{title} (log10 range {lo:.2} to {hi:.2})");
    let mut chart = ChartBuilder::on(&root)
        .caption(caption, ("sans-serif", 16))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0..cols, 0..rows)
        .map_err(plot_error)?;
    chart.configure_mesh().disable_mesh().x_desc(x_label).y_desc(y_label).draw().map_err(plot_error)?;
    chart
        .draw_series(values.iter().enumerate().flat_map(|(i, row)| {
            row.iter().enumerate().map(move |(j, &v)| {
                let color = if v > 0.0 && v.is_finite() {
                    let s = (v.log10() - lo) / span;
                    HSLColor(0.66 * (1.0 - s), 0.85, 0.5).to_rgba()
                } else {
                    RGBColor(180, 180, 180).to_rgba()
                };
                Rectangle::new([(j, i), (j + 1, i + 1)], color.filled())
            })
        }))
        .map_err(plot_error)?;
    root.present().map_err(plot_error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats() -> MeshStats {
        MeshStats { nodes: 10, triangles: 8, interior_nodes: 2, h_max: 0.5, longest_edge: 0.5, min_angle_deg: 30.0 }
    }

    #[test]
    fn reports_validate_against_the_schema() {
        let checks = vec![Check::at_most("residual", 1e-9, 1e-8), Check::finite_positive("lambda", f64::INFINITY)];
        let r = Report::new("eigen", &"0".repeat(64), "square", stats(), checks, vec![], serde_json::json!({}));
        assert_eq!(r.status, "fail");
        let doc = serde_json::to_value(&r).unwrap();
        validate_report(&doc).unwrap();
        assert_eq!(doc["checks"][1]["value"], Value::Null);
        let mut bad = doc.clone();
        bad["experiment"] = "nope".into();
        assert_eq!(validate_report(&bad).unwrap_err().kind(), "ParseError");
        let mut bad = doc;
        bad["config_sha256"] = "xyz".into();
        assert!(validate_report(&bad).is_err());
    }

    #[test]
    fn plots_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutDir::create(dir.path()).unwrap();
        let s = Series { label: "decay", points: (1..20).map(|k| (k as f64, (-(k as f64)).exp())).collect() };
        log_line_plot(&out.path("a.svg"), "D(t)", "t", "D", &[s]).unwrap();
        log_heatmap(&out.path("b.svg"), "ratios", "pair", "time", &[vec![1.0, 2.0], vec![0.0, 4.0]]).unwrap();
        let text = std::fs::read_to_string(out.path("a.svg")).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(log_line_plot(&out.path("c.svg"), "x", "t", "D", &[]).is_err());
    }
}
