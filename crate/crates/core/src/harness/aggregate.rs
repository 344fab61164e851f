//! Cross-seed statistics of success-rate curves.
//!
//! Quantiles use linear interpolation between order statistics: for sorted
//! values `x_0 ≤ … ≤ x_{n−1}` and probability `p`, let `h = (n − 1)p`; the
//! quantile is `x_⌊h⌋ + (h − ⌊h⌋)(x_⌊h⌋+1 − x_⌊h⌋)`. This is the default of
//! R (type 7) and NumPy (`linear`).

use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{read_metrics, MetricsRow};
use crate::error::{Error, Result};

/// Linear-interpolation quantile of already sorted values.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, p)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub epoch: usize,
    pub env_steps: u64,
    pub seeds: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateStats {
    pub rows: Vec<AggregateRow>,
}

/// Per-epoch median and quartiles of success rate across runs.
pub fn aggregate_stats(runs: &[Vec<MetricsRow>]) -> Result<AggregateStats> {
    let Some(first) = runs.first() else {
        return Err(Error::InvalidArgument("no runs to aggregate".into()));
    };
    for (i, run) in runs.iter().enumerate() {
        let aligned = run.len() == first.len()
            && run
                .iter()
                .zip(first)
                .all(|(a, b)| a.epoch == b.epoch && a.env_steps == b.env_steps);
        if !aligned {
            return Err(Error::Misaligned(format!(
                "run {i} has epochs {:?}, run 0 has {:?}",
                run.iter().map(|r| r.epoch).collect::<Vec<_>>(),
                first.iter().map(|r| r.epoch).collect::<Vec<_>>()
            )));
        }
    }
    let rows = first
        .iter()
        .enumerate()
        .map(|(k, base)| {
            let mut values: Vec<f64> = runs.iter().map(|run| run[k].success_rate).collect();
            values.sort_by(f64::total_cmp);
            AggregateRow {
                epoch: base.epoch,
                env_steps: base.env_steps,
                seeds: values.len(),
                median: quantile_sorted(&values, 0.5),
                q25: quantile_sorted(&values, 0.25),
                q75: quantile_sorted(&values, 0.75),
            }
        })
        .collect();
    Ok(AggregateStats { rows })
}

/// Accepts run directories (reading `metrics.csv` inside) or metrics files.
pub fn metrics_path(run: &Path) -> PathBuf {
    if run.is_dir() {
        run.join("metrics.csv")
    } else {
        run.to_path_buf()
    }
}

pub fn aggregate_files(runs: &[PathBuf]) -> Result<AggregateStats> {
    let loaded: Vec<Vec<MetricsRow>> = runs
        .iter()
        .map(|r| read_metrics(metrics_path(r)))
        .collect::<Result<_>>()?;
    aggregate_stats(&loaded)
}

impl AggregateStats {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        for row in &self.rows {
            writer.serialize(row)?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let rows = csv::Reader::from_reader(file)
            .deserialize()
            .collect::<std::result::Result<Vec<AggregateRow>, _>>()?;
        Ok(Self { rows })
    }

    /// Learning curve as an SVG: median line over a shaded interquartile band.
    pub fn to_svg(&self, title: &str) -> String {
        const W: f64 = 640.0;
        const H: f64 = 400.0;
        const LEFT: f64 = 60.0;
        const RIGHT: f64 = 20.0;
        const TOP: f64 = 40.0;
        const BOTTOM: f64 = 50.0;
        let max_steps = self.rows.iter().map(|r| r.env_steps).max().unwrap_or(1).max(1) as f64;
        let x = |steps: u64| LEFT + (W - LEFT - RIGHT) * steps as f64 / max_steps;
        let y = |v: f64| TOP + (H - TOP - BOTTOM) * (1.0 - v.clamp(0.0, 1.0));

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
            W / 2.0,
            escape(title)
        );
        for tick in 0..=4 {
            let v = tick as f64 / 4.0;
            let _ = writeln!(
                svg,
                r##"<line x1="{LEFT}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="#ddd"/><text x="{2}" y="{3:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{v:.2}</text>"##,
                y(v),
                W - RIGHT,
                LEFT - 6.0,
                y(v) + 4.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<line x1="{LEFT}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{0}" stroke="black"/>"#,
            H - BOTTOM,
            W - RIGHT
        );
        let _ = writeln!(
            svg,
            r#"<text x="{0}" y="{1}" text-anchor="middle" font-family="sans-serif" font-size="12">env steps (max {max_steps})</text>"#,
            (LEFT + W - RIGHT) / 2.0,
            H - 14.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{0}" transform="rotate(-90 16 {0})" text-anchor="middle" font-family="sans-serif" font-size="12">success rate</text>"#,
            (TOP + H - BOTTOM) / 2.0
        );
        if !self.rows.is_empty() {
            let upper = self.rows.iter().map(|r| format!("{:.2},{:.2}", x(r.env_steps), y(r.q75)));
            let lower = self.rows.iter().rev().map(|r| format!("{:.2},{:.2}", x(r.env_steps), y(r.q25)));
            let band: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                svg,
                r##"<polygon points="{}" fill="#1f77b4" fill-opacity="0.25" stroke="none"/>"##,
                band.join(" ")
            );
            let line: Vec<String> = self
                .rows
                .iter()
                .map(|r| format!("{:.2},{:.2}", x(r.env_steps), y(r.median)))
                .collect();
            let _ = writeln!(
                svg,
                r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
                line.join(" ")
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Mean success over epochs, the normalised area under the curve.
pub fn success_auc(rows: &[MetricsRow]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().map(|r| r.success_rate).sum::<f64>() / rows.len() as f64
}
