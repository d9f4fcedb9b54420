//! Minimal SVG line charts overlaying the two strategies' smoothed series.

use std::fs;
use std::path::{Path, PathBuf};

use super::experiment::{read_aggregate, AggregateRow};
use super::HarnessError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

pub struct Metric {
    pub file: &'static str,
    pub title: &'static str,
    pub value: fn(&AggregateRow) -> f64,
}

pub const METRICS: [Metric; 3] = [
    Metric { file: "avg_waiting_all.svg", title: "Average waiting time (all vehicles)", value: |r| r.avg_waiting_all },
    Metric {
        file: "total_waiting_priority.svg",
        title: "Total waiting time (priority vehicles)",
        value: |r| r.total_waiting_priority,
    },
    Metric { file: "collisions.svg", title: "Collisions per time-step", value: |r| r.collisions },
];

fn polyline(rows: &[AggregateRow], value: fn(&AggregateRow) -> f64, x_max: f64, y_max: f64) -> String {
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    rows.iter()
        .map(|r| {
            let x = MARGIN + plot_w * (r.step as f64 / x_max.max(1.0));
            let y = HEIGHT - MARGIN - plot_h * (value(r) / y_max);
            format!("{x:.2},{y:.2}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn render(metric: &Metric, series: &[(&str, &str, &[AggregateRow])]) -> String {
    let x_max = series.iter().flat_map(|(_, _, rows)| rows.iter().map(|r| r.step as f64)).fold(0.0, f64::max);
    let y_max = series
        .iter()
        .flat_map(|(_, _, rows)| rows.iter().map(metric.value))
        .fold(0.0, f64::max)
        .max(1e-9);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n\
         <line x1=\"{MARGIN}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{MARGIN}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">0</text>\n\
         <text x=\"{r}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">step {x_max}</text>\n\
         <text x=\"{}\" y=\"{MARGIN}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{y_max:.2}</text>\n",
        WIDTH / 2.0,
        metric.title,
        HEIGHT - MARGIN + 16.0,
        HEIGHT - MARGIN + 16.0,
        MARGIN - 4.0,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
    );
    for (i, (label, colour, rows)) in series.iter().enumerate() {
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            polyline(rows, metric.value, x_max, y_max)
        ));
        let ly = MARGIN + 16.0 * i as f64;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{ly}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{colour}\">{label}</text>\n",
            WIDTH - MARGIN - 60.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes one SVG per metric comparing the two smoothed aggregate CSVs.
/// Nothing is written unless both inputs exist and hold at least one step.
pub fn emit_charts(uns_csv: &Path, iron_csv: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let uns = read_aggregate(uns_csv)?;
    let iron = read_aggregate(iron_csv)?;
    for (path, rows) in [(uns_csv, &uns), (iron_csv, &iron)] {
        if rows.is_empty() {
            return Err(HarnessError::EmptyAggregate(path.to_path_buf()));
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let series: [(&str, &str, &[AggregateRow]); 2] = [("UNS", "#1f77b4", &uns), ("IRON", "#d62728", &iron)];
    let mut written = Vec::new();
    for metric in &METRICS {
        let path = out_dir.join(metric.file);
        fs::write(&path, render(metric, &series)).map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
