use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::evaluation::EvaluationConfig;
use crate::gridworld::{PriorityRatio, SpawnConfig, DEFAULT_GRID_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Fair synthesis for every responsible agent plus utility arbitration.
    Uns,
    /// One random responsible agent per conflict; every applicable norm applies.
    Iron,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Uns => "uns",
            Strategy::Iron => "iron",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uns" => Ok(Strategy::Uns),
            "iron" => Ok(Strategy::Iron),
            other => Err(HarnessError::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

/// The three experiment settings, differing only in violation rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    A,
    B,
    C,
}

impl Scenario {
    pub fn violation_rate(self) -> f64 {
        match self {
            Scenario::A => 0.1,
            Scenario::B => 0.7,
            Scenario::C => 0.0,
        }
    }
}

impl FromStr for Scenario {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Scenario::A),
            "b" => Ok(Scenario::B),
            "c" => Ok(Scenario::C),
            other => Err(HarnessError::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid_size: usize,
    pub spawn_min: u32,
    pub spawn_max: u32,
    pub priority_ratio: PriorityRatio,
    pub violation_rate: f64,
    pub strategy: Strategy,
    pub max_steps: u64,
    pub runs: u32,
    pub moving_average_window: usize,
    pub seed: u64,
    pub evaluation: EvaluationConfig,
    pub deadlock_patience: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            grid_size: DEFAULT_GRID_SIZE,
            spawn_min: 2,
            spawn_max: 8,
            priority_ratio: PriorityRatio::default(),
            violation_rate: Scenario::A.violation_rate(),
            strategy: Strategy::Uns,
            max_steps: 1000,
            runs: 10,
            moving_average_window: 50,
            seed: 0,
            evaluation: EvaluationConfig::default(),
            deadlock_patience: 20,
        }
    }
}

impl ScenarioConfig {
    pub fn for_scenario(scenario: Scenario, strategy: Strategy) -> Self {
        Self { violation_rate: scenario.violation_rate(), strategy, ..Self::default() }
    }

    /// Reads a TOML document whose keys mirror the struct fields. Missing
    /// keys keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn spawn_config(&self) -> SpawnConfig {
        SpawnConfig { spawn_min: self.spawn_min, spawn_max: self.spawn_max, priority_ratio: self.priority_ratio }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(0.0..=1.0).contains(&self.violation_rate) {
            return Err(HarnessError::Config(format!("violation_rate {} outside [0,1]", self.violation_rate)));
        }
        if self.spawn_min > self.spawn_max {
            return Err(HarnessError::Config(format!(
                "spawn_min {} exceeds spawn_max {}",
                self.spawn_min, self.spawn_max
            )));
        }
        if self.runs < 1 {
            return Err(HarnessError::Config("runs must be at least 1".into()));
        }
        if self.grid_size < 4 {
            return Err(HarnessError::Config(format!("grid_size {} is below 4", self.grid_size)));
        }
        if self.moving_average_window < 1 {
            return Err(HarnessError::Config("moving_average_window must be at least 1".into()));
        }
        if self.deadlock_patience < 1 {
            return Err(HarnessError::Config("deadlock_patience must be at least 1".into()));
        }
        self.evaluation.validate().map_err(|e| HarnessError::Config(e.to_string()))
    }
}
