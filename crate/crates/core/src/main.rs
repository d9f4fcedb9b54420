use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use junction_norms::harness::{self, HarnessError, Scenario, ScenarioConfig, Strategy};

#[derive(Parser)]
#[command(name = "junction-norms", about = "Norm synthesis experiments on a two-road junction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one strategy for several seeds and write CSVs, norm dumps and a summary.
    Simulate {
        /// Sets the violation rate; without it the config file's rate is kept.
        #[arg(long)]
        scenario: Option<Scenario>,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        runs: Option<u32>,
        #[arg(long)]
        out: PathBuf,
        /// TOML file with ScenarioConfig fields; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run both strategies on shared spawn streams and draw comparison charts.
    Compare {
        #[arg(long)]
        scenario: Option<Scenario>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        runs: Option<u32>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the final norm sets written by a previous run.
    DumpNorms {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn base_config(
    scenario: Option<Scenario>,
    file: Option<&PathBuf>,
    seed: Option<u64>,
    steps: Option<u64>,
    runs: Option<u32>,
) -> Result<ScenarioConfig, HarnessError> {
    let mut cfg = match file {
        Some(path) => ScenarioConfig::from_file(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(sc) = scenario {
        cfg.violation_rate = sc.violation_rate();
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(s) = steps {
        cfg.max_steps = s;
    }
    if let Some(r) = runs {
        cfg.runs = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Simulate { scenario, strategy, seed, steps, runs, out, config } => {
            let mut cfg = base_config(scenario, config.as_ref(), seed, steps, runs)?;
            cfg.strategy = strategy;
            let report = harness::run_experiment(&cfg, Some(&out))?;
            println!("{}", serde_json::to_string_pretty(&report.summary).expect("summary serialises"));
        }
        Command::Compare { scenario, seed, steps, runs, out, config } => {
            let cfg = base_config(scenario, config.as_ref(), seed, steps, runs)?;
            let (uns, iron) = harness::compare(&cfg, &out)?;
            for s in [&uns.summary, &iron.summary] {
                println!(
                    "{:<4} avg_waiting={:.3} priority_waiting={:.3} collisions/step={:.4} total_collisions={} deadlocks={}/{}",
                    s.strategy,
                    s.mean_avg_waiting,
                    s.mean_total_priority_waiting,
                    s.mean_collisions_per_step,
                    s.total_collisions,
                    s.deadlock_count,
                    s.runs
                );
            }
        }
        Command::DumpNorms { input } => print!("{}", harness::dump_norms(&input)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
