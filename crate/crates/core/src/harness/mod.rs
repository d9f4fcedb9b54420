//! Scenario configuration, the simulation loop, multi-run experiments and
//! their file outputs.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod charts;
pub mod config;
pub mod experiment;
pub mod sim;

pub use charts::emit_charts;
pub use config::{Scenario, ScenarioConfig, Strategy};
pub use experiment::{aggregate, dump_norms, moving_average, run_experiment, AggregateRow, ExperimentReport, RawRow, Summary};
pub use sim::{detect_deadlock, rng_stream, SPAWN_STREAM, MetricsRecord, RunResult, Simulation};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error("missing input file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("aggregate {} has no rows", .0.display())]
    EmptyAggregate(PathBuf),
    #[error("simulation failed: {0}")]
    Simulation(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn csv(path: &Path, e: csv::Error) -> Self {
        HarnessError::Csv { path: path.to_path_buf(), message: e.to_string() }
    }
}

/// Runs both strategies on the same seeds (and therefore the same spawn
/// streams), writing `uns/`, `iron/` and the comparison charts under `out`.
pub fn compare(base: &ScenarioConfig, out: &Path) -> Result<(ExperimentReport, ExperimentReport), HarnessError> {
    let uns_cfg = ScenarioConfig { strategy: Strategy::Uns, ..base.clone() };
    let iron_cfg = ScenarioConfig { strategy: Strategy::Iron, ..base.clone() };
    let uns_dir = out.join("uns");
    let iron_dir = out.join("iron");
    let uns = run_experiment(&uns_cfg, Some(&uns_dir))?;
    let iron = run_experiment(&iron_cfg, Some(&iron_dir))?;
    emit_charts(&uns_dir.join(experiment::SMOOTHED_FILE), &iron_dir.join(experiment::SMOOTHED_FILE), out)?;
    Ok((uns, iron))
}
