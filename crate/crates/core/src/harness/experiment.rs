//! Multi-run experiments: parallel runs, cross-run aggregation, moving
//! averages and file output.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ScenarioConfig, Strategy};
use super::sim::{RunResult, Simulation};
use super::HarnessError;

pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const SMOOTHED_FILE: &str = "aggregate_ma50.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// One line of a per-run CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub step: u64,
    pub avg_waiting_all: f64,
    pub total_waiting_priority: u64,
    pub collisions: u64,
    pub active_norms: u64,
    pub deadlocked: u8,
}

/// One line of the aggregate CSVs: cross-run means per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub step: u64,
    pub avg_waiting_all: f64,
    pub total_waiting_priority: f64,
    pub collisions: f64,
    pub active_norms: f64,
    /// Fraction of all runs that have deadlocked at or before this step.
    pub deadlocked: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub strategy: Strategy,
    pub violation_rate: f64,
    pub runs: u32,
    pub steps_per_run: Vec<u64>,
    /// Mean over runs of each run's mean average waiting.
    pub mean_avg_waiting: f64,
    /// Mean over runs of each run's mean priority waiting total.
    pub mean_total_priority_waiting: f64,
    /// Collisions over all runs divided by steps over all runs.
    pub mean_collisions_per_step: f64,
    pub total_collisions: u64,
    pub collisions_per_run: Vec<u64>,
    pub deadlocked: Vec<bool>,
    pub deadlock_count: u32,
    pub synthesised_norms: Vec<u64>,
    pub final_active_norms: Vec<u64>,
    /// Violated share of (vehicle, assigned norm) events across all runs.
    pub violation_fraction: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ScenarioConfig,
    pub runs: Vec<RunResult>,
    pub aggregate: Vec<AggregateRow>,
    pub smoothed: Vec<AggregateRow>,
    pub summary: Summary,
}

pub fn raw_rows(run: &RunResult) -> Vec<RawRow> {
    run.records
        .iter()
        .map(|r| RawRow {
            step: r.step,
            avg_waiting_all: r.avg_waiting_all,
            total_waiting_priority: r.total_waiting_priority,
            collisions: r.collisions,
            active_norms: r.active_norms,
            deadlocked: u8::from(r.deadlocked),
        })
        .collect()
}

/// Per-step means over the runs that reached that step.
pub fn aggregate(runs: &[Vec<RawRow>]) -> Vec<AggregateRow> {
    let len = runs.iter().map(Vec::len).max().unwrap_or(0);
    let total_runs = runs.len() as f64;
    (0..len)
        .map(|i| {
            let rows: Vec<&RawRow> = runs.iter().filter_map(|r| r.get(i)).collect();
            let n = rows.len() as f64;
            let mean = |f: &dyn Fn(&RawRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
            let dead = runs
                .iter()
                .filter(|r| r.iter().take(i + 1).any(|row| row.deadlocked == 1))
                .count() as f64;
            AggregateRow {
                step: i as u64,
                avg_waiting_all: mean(&|r| r.avg_waiting_all),
                total_waiting_priority: mean(&|r| r.total_waiting_priority as f64),
                collisions: mean(&|r| r.collisions as f64),
                active_norms: mean(&|r| r.active_norms as f64),
                deadlocked: dead / total_runs,
            }
        })
        .collect()
}

/// Trailing mean over the last `min(window, i + 1)` rows.
pub fn moving_average(rows: &[AggregateRow], window: usize) -> Vec<AggregateRow> {
    let window = window.max(1);
    (0..rows.len())
        .map(|i| {
            let from = (i + 1).saturating_sub(window);
            let slice = &rows[from..=i];
            let n = slice.len() as f64;
            let mean = |f: fn(&AggregateRow) -> f64| slice.iter().map(f).sum::<f64>() / n;
            AggregateRow {
                step: rows[i].step,
                avg_waiting_all: mean(|r| r.avg_waiting_all),
                total_waiting_priority: mean(|r| r.total_waiting_priority),
                collisions: mean(|r| r.collisions),
                active_norms: mean(|r| r.active_norms),
                deadlocked: mean(|r| r.deadlocked),
            }
        })
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn summarise(config: &ScenarioConfig, runs: &[RunResult]) -> Summary {
    let steps: Vec<u64> = runs.iter().map(|r| r.records.len() as u64).collect();
    let total_steps: u64 = steps.iter().sum();
    let collisions: Vec<u64> = runs.iter().map(RunResult::total_collisions).collect();
    let total_collisions: u64 = collisions.iter().sum();
    let events: u64 = runs.iter().map(|r| r.norm_events).sum();
    let violated: u64 = runs.iter().map(|r| r.violated_events).sum();
    Summary {
        strategy: config.strategy,
        violation_rate: config.violation_rate,
        runs: runs.len() as u32,
        mean_avg_waiting: mean(runs.iter().map(|r| mean(r.records.iter().map(|x| x.avg_waiting_all)))),
        mean_total_priority_waiting: mean(
            runs.iter().map(|r| mean(r.records.iter().map(|x| x.total_waiting_priority as f64))),
        ),
        mean_collisions_per_step: if total_steps == 0 { 0.0 } else { total_collisions as f64 / total_steps as f64 },
        total_collisions,
        collisions_per_run: collisions,
        deadlocked: runs.iter().map(|r| r.deadlocked).collect(),
        deadlock_count: runs.iter().filter(|r| r.deadlocked).count() as u32,
        synthesised_norms: runs.iter().map(|r| r.synthesised).collect(),
        final_active_norms: runs.iter().map(|r| r.norm_set.active_len() as u64).collect(),
        violation_fraction: (events > 0).then(|| violated as f64 / events as f64),
        steps_per_run: steps,
    }
}

/// Runs `config.runs` simulations (seeds `seed`, `seed + 1`, ...) in
/// parallel, aggregates them and, when `out` is given, writes every output
/// file into it.
pub fn run_experiment(config: &ScenarioConfig, out: Option<&Path>) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let runs: Vec<RunResult> = (0..config.runs)
        .into_par_iter()
        .map(|i| Simulation::new(config.clone(), i)?.run())
        .collect::<Result<_, _>>()?;
    let raw: Vec<Vec<RawRow>> = runs.iter().map(raw_rows).collect();
    let aggregate = aggregate(&raw);
    let smoothed = moving_average(&aggregate, config.moving_average_window);
    let summary = summarise(config, &runs);
    let report = ExperimentReport { config: config.clone(), runs, aggregate, smoothed, summary };
    if let Some(dir) = out {
        write_report(&report, &raw, dir)?;
    }
    Ok(report)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::csv(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn run_csv_path(dir: &Path, index: u32) -> PathBuf {
    dir.join(format!("run_{index}.csv"))
}

pub fn norms_path(dir: &Path, index: u32) -> PathBuf {
    dir.join(format!("norms_{index}.txt"))
}

fn write_report(report: &ExperimentReport, raw: &[Vec<RawRow>], dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    for (run, rows) in report.runs.iter().zip(raw) {
        write_csv(&run_csv_path(dir, run.run_index), rows)?;
        write_text(&norms_path(dir, run.run_index), &run.norm_dump())?;
        let mut events = String::from("step,kind,norm,related\n");
        for r in &run.refinements {
            for g in &r.generalised {
                let kids: Vec<String> = g.children.iter().map(|c| c.0.to_string()).collect();
                events.push_str(&format!("{},generalise,{},{}\n", r.step, g.parent.0, kids.join(" ")));
            }
            for s in &r.specialised {
                let kids: Vec<String> = s.reactivated.iter().map(|c| c.0.to_string()).collect();
                events.push_str(&format!("{},specialise,{},{}\n", r.step, s.norm.0, kids.join(" ")));
            }
            for d in &r.deactivated {
                events.push_str(&format!("{},deactivate,{},\n", r.step, d.0));
            }
        }
        write_text(&dir.join(format!("events_{}.csv", run.run_index)), &events)?;
    }
    write_csv(&dir.join(AGGREGATE_FILE), &report.aggregate)?;
    write_csv(&dir.join(SMOOTHED_FILE), &report.smoothed)?;
    let json = serde_json::to_string_pretty(&report.summary).expect("summary serialises");
    write_text(&dir.join(SUMMARY_FILE), &json)?;
    write_text(&dir.join("config.toml"), &report.config.to_toml_string())
}

/// Reads the rows of an aggregate CSV.
pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>, HarnessError> {
    if !path.exists() {
        return Err(HarnessError::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    r.deserialize().collect::<Result<_, _>>().map_err(|e| HarnessError::csv(path, e))
}

pub fn read_raw(path: &Path) -> Result<Vec<RawRow>, HarnessError> {
    if !path.exists() {
        return Err(HarnessError::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    r.deserialize().collect::<Result<_, _>>().map_err(|e| HarnessError::csv(path, e))
}

/// Concatenated norm dumps of every run in `dir`, in run order.
pub fn dump_norms(dir: &Path) -> Result<String, HarnessError> {
    let entries = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut files: Vec<(u32, PathBuf)> = entries
        .filter_map(Result::ok)
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let idx = name.strip_prefix("norms_")?.strip_suffix(".txt")?.parse().ok()?;
            Some((idx, e.path()))
        })
        .collect();
    if files.is_empty() {
        return Err(HarnessError::MissingFile(dir.join("norms_0.txt")));
    }
    files.sort();
    let mut out = String::new();
    for (_, path) in files {
        out.push_str(&fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?);
    }
    Ok(out)
}
