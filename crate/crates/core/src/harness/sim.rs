//! One simulation run: the per-step loop tying detection, synthesis,
//! reasoning, evaluation and refinement to the gridworld.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ScenarioConfig, Strategy};
use super::HarnessError;
use crate::detection::{classify_applications, detect_conflicts, Compliance, ViewSnapshot, ViewTransition};
use crate::evaluation::{refine, NormStats, RefinementReport, Score};
use crate::gridworld::{
    apply_moves, local_view, spawn_vehicles, Decision, RoadMap, VehicleId, VehicleKind, WorldState,
};
use crate::norms::{Norm, NormGraph, NormId, NormSet};
use crate::reasoning::{build_traffic_utility, resolve_unmatchable, UtilityFunction};
use crate::synthesis::{synthesize_iron, synthesize_uns};

pub const SPAWN_STREAM: u64 = 1;
pub const COMPLIANCE_STREAM: u64 = 2;
pub const CHOICE_STREAM: u64 = 3;

/// Observables for one time-step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    /// Mean accumulated waiting over the vehicles that took part in this step.
    pub avg_waiting_all: f64,
    /// Summed accumulated waiting of the priority vehicles that took part in this step.
    pub total_waiting_priority: u64,
    pub collisions: u64,
    pub active_norms: u64,
    pub deadlocked: bool,
    #[serde(skip)]
    pub moved: u64,
    #[serde(skip)]
    pub spawned: u64,
    #[serde(skip)]
    pub synthesised: u64,
}

/// Result of one complete run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub run_index: u32,
    pub seed: u64,
    pub strategy: Strategy,
    pub records: Vec<MetricsRecord>,
    pub deadlocked: bool,
    pub norm_set: NormSet,
    pub scores: BTreeMap<NormId, Score>,
    pub synthesised: u64,
    pub refinements: Vec<RefinementReport>,
    /// (vehicle, assigned norm) events and how many of them were violations.
    pub norm_events: u64,
    pub violated_events: u64,
}

impl RunResult {
    pub fn total_collisions(&self) -> u64 {
        self.records.iter().map(|r| r.collisions).sum()
    }

    /// Final active norms with their latest scores, one per line.
    pub fn norm_dump(&self) -> String {
        let mut out = format!(
            "# run {} seed {} strategy {} synthesised={} active={} deadlocked={}\n",
            self.run_index,
            self.seed,
            self.strategy,
            self.synthesised,
            self.norm_set.active_len(),
            self.deadlocked
        );
        let fmt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        for n in self.norm_set.active() {
            let s = self.scores.get(&n.id);
            out.push_str(&format!(
                "{} nnr={} ner={}\n",
                n,
                fmt(s.and_then(|s| s.necessity)),
                fmt(s.and_then(|s| s.effectiveness))
            ));
        }
        out
    }
}

pub struct Simulation {
    config: ScenarioConfig,
    run_index: u32,
    seed: u64,
    world: WorldState,
    norm_set: NormSet,
    graph: NormGraph,
    stats: NormStats,
    utility: UtilityFunction,
    spawn_rng: ChaCha8Rng,
    compliance_rng: ChaCha8Rng,
    choice_rng: ChaCha8Rng,
    history: Vec<MetricsRecord>,
    refinements: Vec<RefinementReport>,
    synthesised: u64,
    norm_events: u64,
    violated_events: u64,
    deadlocked: bool,
}

/// Independent substream `id` of the run seed.
pub fn rng_stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl Simulation {
    /// Run `run_index` uses seed `config.seed + run_index`.
    pub fn new(config: ScenarioConfig, run_index: u32) -> Result<Self, HarnessError> {
        config.validate()?;
        let roadmap = RoadMap::two_roads(config.grid_size).map_err(|e| HarnessError::Config(e.to_string()))?;
        let seed = config.seed.wrapping_add(u64::from(run_index));
        Ok(Self {
            run_index,
            seed,
            world: WorldState::new(roadmap),
            norm_set: NormSet::new(),
            graph: NormGraph::new(),
            stats: NormStats::new(),
            utility: build_traffic_utility(),
            spawn_rng: rng_stream(seed, SPAWN_STREAM),
            compliance_rng: rng_stream(seed, COMPLIANCE_STREAM),
            choice_rng: rng_stream(seed, CHOICE_STREAM),
            history: Vec::new(),
            refinements: Vec::new(),
            synthesised: 0,
            norm_events: 0,
            violated_events: 0,
            deadlocked: false,
            config,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    /// Direct access for scripted scenarios.
    pub fn world_mut(&mut self) -> &mut WorldState {
        &mut self.world
    }

    pub fn norm_set(&self) -> &NormSet {
        &self.norm_set
    }

    pub fn norm_set_mut(&mut self) -> &mut NormSet {
        &mut self.norm_set
    }

    pub fn history(&self) -> &[MetricsRecord] {
        &self.history
    }

    pub fn norm_events(&self) -> (u64, u64) {
        (self.norm_events, self.violated_events)
    }

    /// Norms each active vehicle is told to apply under the configured strategy.
    fn assign_norms(&self) -> Result<BTreeMap<VehicleId, Vec<NormId>>, HarnessError> {
        match self.config.strategy {
            Strategy::Uns => {
                let r = resolve_unmatchable(&self.world, &self.norm_set, &self.utility)
                    .map_err(|e| HarnessError::Simulation(e.to_string()))?;
                Ok(r.assigned().map(|(v, n)| (v, vec![n])).collect())
            }
            Strategy::Iron => {
                let mut out = BTreeMap::new();
                for v in self.world.active_vehicles() {
                    let view = local_view(&self.world, v.id).map_err(|e| HarnessError::Simulation(e.to_string()))?;
                    let norms: Vec<NormId> = self.norm_set.applicable(&view).iter().map(|n: &&Norm| n.id).collect();
                    if !norms.is_empty() {
                        out.insert(v.id, norms);
                    }
                }
                Ok(out)
            }
        }
    }

    /// Advances the run by one time-step.
    pub fn step_once(&mut self) -> Result<MetricsRecord, HarnessError> {
        let step = self.world.time_step;

        // Reasoning over the current views.
        let assigned = self.assign_norms()?;

        // Compliance: one draw per (vehicle, assigned norm). The vehicle goes
        // only if it ignores every norm it was given.
        let mut decisions: BTreeMap<VehicleId, Decision> = BTreeMap::new();
        let mut compliance: BTreeMap<VehicleId, Compliance> = BTreeMap::new();
        for v in self.world.active_vehicles() {
            let decision = match assigned.get(&v.id) {
                Some(norms) => {
                    let mut ignored_all = true;
                    for _ in norms {
                        let violate = self.compliance_rng.gen_bool(self.config.violation_rate);
                        self.norm_events += 1;
                        self.violated_events += u64::from(violate);
                        ignored_all &= violate;
                    }
                    compliance.insert(v.id, Compliance { norms: norms.clone(), obeyed: !ignored_all });
                    if ignored_all {
                        Decision::Go
                    } else {
                        Decision::Stop
                    }
                }
                None => Decision::Go,
            };
            decisions.insert(v.id, decision);
        }

        let before = ViewSnapshot::capture(&self.world, &decisions);
        let outcome = apply_moves(&mut self.world, &decisions).map_err(|e| HarnessError::Simulation(e.to_string()))?;
        let transition = ViewTransition::new(&before, &self.world).expect("apply_moves advances one step");

        let conflicts = detect_conflicts(&transition);
        let created = match self.config.strategy {
            Strategy::Uns => synthesize_uns(&conflicts, &mut self.norm_set),
            Strategy::Iron => synthesize_iron(&conflicts, &mut self.norm_set, &mut self.choice_rng),
        };
        self.synthesised += created.len() as u64;

        let counts = classify_applications(&transition, &self.norm_set, &compliance);
        self.stats.record(step, &counts);
        self.stats.evaluate(&self.norm_set, step, &self.config.evaluation);

        let report = refine(&mut self.norm_set, &mut self.graph, &mut self.stats, &self.config.evaluation, step);
        if !report.is_empty() {
            self.refinements.push(report);
        }

        let spawned = spawn_vehicles(&mut self.world, &mut self.spawn_rng, &self.config.spawn_config());

        // Population: every vehicle that took a decision this step.
        let mut all_waiting = 0u64;
        let mut priority_waiting = 0u64;
        for id in before.entries.keys() {
            let vehicle = self
                .world
                .vehicle(*id)
                .or_else(|| outcome.exited.iter().find(|v| v.id == *id))
                .expect("participant is on the grid or exited this step");
            all_waiting += vehicle.waiting_steps;
            if vehicle.kind == VehicleKind::Priority {
                priority_waiting += vehicle.waiting_steps;
            }
        }
        let population = before.entries.len() as u64;
        let record = MetricsRecord {
            step,
            avg_waiting_all: if population == 0 { 0.0 } else { all_waiting as f64 / population as f64 },
            total_waiting_priority: priority_waiting,
            collisions: outcome.collisions.len() as u64,
            active_norms: self.norm_set.active_len() as u64,
            deadlocked: false,
            moved: outcome.moved.len() as u64,
            spawned: spawned.len() as u64,
            synthesised: created.len() as u64,
        };
        self.history.push(record.clone());
        Ok(record)
    }

    /// Steps until `max_steps` or until a deadlock is detected.
    pub fn run(mut self) -> Result<RunResult, HarnessError> {
        while (self.history.len() as u64) < self.config.max_steps {
            self.step_once()?;
            if detect_deadlock(&self.history, &self.world, &self.config) {
                self.deadlocked = true;
                if let Some(last) = self.history.last_mut() {
                    last.deadlocked = true;
                }
                break;
            }
        }
        let scores = self.norm_set.active().filter_map(|n| self.stats.latest(n.id).map(|s| (n.id, s))).collect();
        Ok(RunResult {
            run_index: self.run_index,
            seed: self.seed,
            strategy: self.config.strategy,
            records: self.history,
            deadlocked: self.deadlocked,
            norm_set: self.norm_set,
            scores,
            synthesised: self.synthesised,
            refinements: self.refinements,
            norm_events: self.norm_events,
            violated_events: self.violated_events,
        })
    }
}

/// True when vehicles are present but none has moved for
/// `deadlock_patience` consecutive steps.
pub fn detect_deadlock(history: &[MetricsRecord], world: &WorldState, config: &ScenarioConfig) -> bool {
    let patience = config.deadlock_patience as usize;
    if history.len() < patience || world.active_vehicles().next().is_none() {
        return false;
    }
    history[history.len() - patience..].iter().all(|r| r.moved == 0)
}
