//! CSV and SVG report emitters. Output is byte-deterministic: fixed float
//! precision, input order preserved, no timestamps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CalibrationCurve;
use crate::error::{Error, Result};
use crate::featurize::VariancePoint;

/// One cell of the scenario grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub train_scenario: String,
    pub test_subset: String,
    pub encoder: String,
    pub classifier: String,
    pub layout: String,
    pub f1: Option<f64>,
    pub far: Option<f64>,
    pub frr: Option<f64>,
    pub brier: Option<f64>,
    pub n: usize,
    /// Set when the cell could not be computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const GRID_HEADER: [&str; 10] = [
    "train_scenario",
    "test_subset",
    "encoder",
    "classifier",
    "layout",
    "f1",
    "far",
    "frr",
    "brier",
    "n",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCalibration {
    pub key: String,
    pub curve: CalibrationCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedVariance {
    pub key: String,
    pub points: Vec<VariancePoint>,
}

/// Everything the report stage renders.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub grid: Vec<GridRow>,
    pub calibration: Vec<NamedCalibration>,
    pub variance: Vec<NamedVariance>,
}

/// Fixed six-decimal rendering; undefined values print as `NA`.
pub fn fmt_value(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.6}"),
        _ => "NA".to_string(),
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Config(e.to_string()))
}

pub fn grid_csv(rows: &[GridRow]) -> Result<Vec<u8>> {
    csv_bytes(
        &GRID_HEADER,
        rows.iter().map(|r| {
            vec![
                r.train_scenario.clone(),
                r.test_subset.clone(),
                r.encoder.clone(),
                r.classifier.clone(),
                r.layout.clone(),
                fmt_value(r.f1),
                fmt_value(r.far),
                fmt_value(r.frr),
                fmt_value(r.brier),
                r.n.to_string(),
            ]
        }),
    )
}

pub fn calibration_csv(curve: &CalibrationCurve) -> Result<Vec<u8>> {
    csv_bytes(
        &["bin_lo", "bin_hi", "mean_p", "emp_freq", "count"],
        curve.bins.iter().map(|b| {
            vec![
                fmt_value(Some(b.lo)),
                fmt_value(Some(b.hi)),
                fmt_value(Some(b.mean_p)),
                fmt_value(Some(b.emp_freq)),
                b.count.to_string(),
            ]
        }),
    )
}

pub fn variance_csv(points: &[VariancePoint]) -> Result<Vec<u8>> {
    csv_bytes(
        &["component_index", "ratio", "cumulative"],
        points.iter().map(|p| {
            vec![
                p.component_index.to_string(),
                fmt_value(Some(p.ratio)),
                fmt_value(Some(p.cumulative)),
            ]
        }),
    )
}

const PLOT: f64 = 300.0;
const MARGIN: f64 = 40.0;

fn svg_open(width: f64, height: f64, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="20" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        width / 2.0,
        xml_escape(title)
    );
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Map a unit-square point to plot coordinates.
fn to_px(x: f64, y: f64) -> (f64, f64) {
    (MARGIN + x * PLOT, MARGIN + (1.0 - y) * PLOT)
}

fn axes(s: &mut String) {
    let (x0, y0) = to_px(0.0, 0.0);
    let (x1, y1) = to_px(1.0, 1.0);
    let _ = writeln!(
        s,
        r#"<rect x="{x0:.1}" y="{y1:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
}

fn polyline(points: &[(f64, f64)], stroke: &str, dashed: bool) -> String {
    let coords: Vec<String> = points
        .iter()
        .map(|&(x, y)| {
            let (px, py) = to_px(x, y);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    let dash = if dashed { r#" stroke-dasharray="4 3""# } else { "" };
    format!(
        r#"<polyline points="{}" fill="none" stroke="{stroke}"{dash}/>"#,
        coords.join(" ")
    )
}

/// Reliability diagram: one vertex per non-empty bin plus the diagonal.
pub fn calibration_svg(curve: &CalibrationCurve, title: &str) -> String {
    let size = PLOT + 2.0 * MARGIN;
    let mut s = svg_open(size, size, title);
    axes(&mut s);
    let _ = writeln!(s, "{}", polyline(&[(0.0, 0.0), (1.0, 1.0)], "gray", true));
    let pts: Vec<(f64, f64)> = curve.bins.iter().map(|b| (b.mean_p, b.emp_freq)).collect();
    let _ = writeln!(s, "{}", polyline(&pts, "steelblue", false));
    s.push_str("</svg>\n");
    s
}

/// Cumulative explained-variance curve.
pub fn variance_svg(points: &[VariancePoint], title: &str) -> String {
    let size = PLOT + 2.0 * MARGIN;
    let mut s = svg_open(size, size, title);
    axes(&mut s);
    let k = points.len().max(1) as f64;
    let pts: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.component_index as f64 / k, p.cumulative.clamp(0.0, 1.0)))
        .collect();
    let _ = writeln!(s, "{}", polyline(&pts, "darkred", false));
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapMetric {
    F1,
    Far,
}

impl HeatmapMetric {
    fn pick(self, r: &GridRow) -> Option<f64> {
        match self {
            HeatmapMetric::F1 => r.f1,
            HeatmapMetric::Far => r.far,
        }
    }

    fn name(self) -> &'static str {
        match self {
            HeatmapMetric::F1 => "f1",
            HeatmapMetric::Far => "far",
        }
    }
}

fn ordered_unique<'a>(items: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

/// Train-scenario × test-subset heatmap for rows of one model configuration.
pub fn heatmap_svg(rows: &[GridRow], metric: HeatmapMetric, title: &str) -> String {
    let trains = ordered_unique(rows.iter().map(|r| r.train_scenario.as_str()));
    let tests = ordered_unique(rows.iter().map(|r| r.test_subset.as_str()));
    let cell = 70.0;
    let left = 130.0;
    let top = 50.0;
    let width = left + cell * tests.len() as f64 + 20.0;
    let height = top + cell * trains.len() as f64 + 20.0;
    let mut s = svg_open(width, height, title);
    for (j, t) in tests.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
            left + cell * (j as f64 + 0.5),
            top - 6.0,
            xml_escape(t)
        );
    }
    for (i, tr) in trains.iter().enumerate() {
        let y = top + cell * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + cell / 2.0,
            xml_escape(tr)
        );
        for (j, te) in tests.iter().enumerate() {
            let x = left + cell * j as f64;
            let value = rows
                .iter()
                .find(|r| r.train_scenario == *tr && r.test_subset == *te)
                .and_then(|r| metric.pick(r));
            let fill = match value {
                Some(v) => {
                    let shade = (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8;
                    format!("rgb(255,{shade},{shade})")
                }
                None => "rgb(220,220,220)".to_string(),
            };
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{cell:.1}" height="{cell:.1}" fill="{fill}" stroke="white"/>"#
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0,
                value.map_or_else(|| "NA".to_string(), |v| format!("{:.1}", 100.0 * v))
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn sanitize(key: &str) -> String {
    key.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write(path: PathBuf, bytes: &[u8], written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Write the bundle's CSV and SVG files under `dir`; returns the paths.
pub fn emit_reports(bundle: &ReportBundle, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    if !bundle.grid.is_empty() {
        write(dir.join("grid.csv"), &grid_csv(&bundle.grid)?, &mut written)?;
        let mut configs: Vec<(String, String, String)> = Vec::new();
        for r in &bundle.grid {
            let key = (r.encoder.clone(), r.layout.clone(), r.classifier.clone());
            if !configs.contains(&key) {
                configs.push(key);
            }
        }
        for (encoder, layout, classifier) in configs {
            let rows: Vec<GridRow> = bundle
                .grid
                .iter()
                .filter(|r| r.encoder == encoder && r.layout == layout && r.classifier == classifier)
                .cloned()
                .collect();
            for metric in [HeatmapMetric::F1, HeatmapMetric::Far] {
                let title = format!("{} ({encoder}, {layout}, {classifier})", metric.name().to_uppercase());
                let name = format!(
                    "heatmap_{}_{}.svg",
                    metric.name(),
                    sanitize(&format!("{layout}_{classifier}"))
                );
                write(
                    dir.join(name),
                    heatmap_svg(&rows, metric, &title).as_bytes(),
                    &mut written,
                )?;
            }
        }
    }
    if !bundle.calibration.is_empty() {
        let sub = dir.join("calibration");
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for c in &bundle.calibration {
            let stem = sanitize(&c.key);
            write(
                sub.join(format!("{stem}.csv")),
                &calibration_csv(&c.curve)?,
                &mut written,
            )?;
            write(
                sub.join(format!("{stem}.svg")),
                calibration_svg(&c.curve, &c.key).as_bytes(),
                &mut written,
            )?;
        }
    }
    if !bundle.variance.is_empty() {
        let sub = dir.join("variance");
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for v in &bundle.variance {
            let stem = sanitize(&v.key);
            write(sub.join(format!("{stem}.csv")), &variance_csv(&v.points)?, &mut written)?;
            write(
                sub.join(format!("{stem}.svg")),
                variance_svg(&v.points, &v.key).as_bytes(),
                &mut written,
            )?;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::reliability;

    fn grid() -> Vec<GridRow> {
        let mut rows = Vec::new();
        for (i, train) in ["baseline", "gpt35_retrain", "gpt4_retrain", "gpt35_4_retrain"]
            .iter()
            .enumerate()
        {
            for (j, test) in ["baseline", "gpt35_attack", "gpt4_attack", "combined_attack"]
                .iter()
                .enumerate()
            {
                rows.push(GridRow {
                    train_scenario: train.to_string(),
                    test_subset: test.to_string(),
                    encoder: "builtin-mean".into(),
                    classifier: "gbdt".into(),
                    layout: "fused".into(),
                    f1: Some(0.9 + 0.01 * i as f64),
                    far: if j == 0 { None } else { Some(0.1 * j as f64) },
                    frr: Some(0.01),
                    brier: Some(0.05),
                    n: 100 + j,
                    error: None,
                });
            }
        }
        rows
    }

    #[test]
    fn grid_has_one_row_per_cell() {
        let bytes = grid_csv(&grid()).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 17);
        assert_eq!(lines[0], GRID_HEADER.join(","));
        assert!(lines[1].contains(",NA,"));
    }

    #[test]
    fn emission_is_byte_deterministic() {
        let probs: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let truth: Vec<bool> = (0..50).map(|i| i % 3 == 0).collect();
        let bundle = ReportBundle {
            grid: grid(),
            calibration: vec![NamedCalibration {
                key: "fused/gbdt".into(),
                curve: reliability(&probs, &truth, 10).unwrap(),
            }],
            variance: vec![],
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let fa = emit_reports(&bundle, a.path()).unwrap();
        let fb = emit_reports(&bundle, b.path()).unwrap();
        assert_eq!(fa.len(), fb.len());
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
    }

    #[test]
    fn calibration_svg_vertices() {
        let probs: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let truth: Vec<bool> = probs.iter().map(|&p| p > 0.4).collect();
        let curve = reliability(&probs, &truth, 10).unwrap();
        let svg = calibration_svg(&curve, "t");
        let lines: Vec<&str> = svg.lines().filter(|l| l.starts_with("<polyline")).collect();
        assert_eq!(lines.len(), 2);
        let vertices = |l: &str| {
            l.split("points=\"")
                .nth(1)
                .unwrap()
                .split('"')
                .next()
                .unwrap()
                .split(' ')
                .count()
        };
        assert_eq!(vertices(lines[0]), 2);
        assert!(vertices(lines[1]) <= 10);
    }

    #[test]
    fn unwritable_path_is_fatal() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let bundle = ReportBundle {
            grid: grid(),
            ..Default::default()
        };
        assert!(emit_reports(&bundle, f.path().join("sub")).is_err());
    }
}
