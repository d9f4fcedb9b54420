//! Utility-based norm reasoning.
//!
//! A utility function is assembled from system objectives (maximised terms
//! add, minimised terms subtract). When several vehicles competing for the
//! same cell each have an applicable norm, each candidate is scored by the
//! utility of the one-step projection in which that vehicle stops and every
//! vehicle queued behind it waits too. The best candidate is applied and
//! the others are dismissed.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{local_view, Position, VehicleId, VehicleKind, WorldError, WorldState};
use crate::norms::{matches, Norm, NormId, NormSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReasoningError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("norm {norm} is not applicable to vehicle {vehicle}")]
    NotApplicable { vehicle: VehicleId, norm: NormId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Maximise,
    Minimise,
}

impl Sense {
    fn sign(self) -> f64 {
        match self {
            Sense::Maximise => 1.0,
            Sense::Minimise => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Evaluator {
    /// Mean waiting steps over all vehicles in the population.
    AverageWaitingAll,
    /// Summed waiting steps of priority vehicles.
    TotalWaitingPriority,
}

/// Waiting totals per vehicle kind; all an evaluator needs from a state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaitingProfile {
    pub ordinary_count: u64,
    pub ordinary_waiting: u64,
    pub priority_count: u64,
    pub priority_waiting: u64,
}

impl WaitingProfile {
    /// Profile of the active vehicles in `world`.
    pub fn of_world(world: &WorldState) -> Self {
        let mut p = Self::default();
        for v in world.active_vehicles() {
            p.add_vehicle(v.kind, v.waiting_steps);
        }
        p
    }

    pub fn add_vehicle(&mut self, kind: VehicleKind, waiting: u64) {
        match kind {
            VehicleKind::Ordinary => {
                self.ordinary_count += 1;
                self.ordinary_waiting += waiting;
            }
            VehicleKind::Priority => {
                self.priority_count += 1;
                self.priority_waiting += waiting;
            }
        }
    }

    pub fn add_waiting(&mut self, kind: VehicleKind, extra: u64) {
        match kind {
            VehicleKind::Ordinary => self.ordinary_waiting += extra,
            VehicleKind::Priority => self.priority_waiting += extra,
        }
    }
}

impl Evaluator {
    pub fn evaluate(self, p: &WaitingProfile) -> f64 {
        match self {
            Evaluator::AverageWaitingAll => {
                let n = p.ordinary_count + p.priority_count;
                if n == 0 {
                    0.0
                } else {
                    (p.ordinary_waiting + p.priority_waiting) as f64 / n as f64
                }
            }
            Evaluator::TotalWaitingPriority => p.priority_waiting as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerm {
    pub id: String,
    pub sense: Sense,
    pub evaluator: Evaluator,
    /// Multiplier on the evaluator's raw value.
    pub scale: f64,
}

impl ObjectiveTerm {
    pub fn new(id: impl Into<String>, sense: Sense, evaluator: Evaluator) -> Self {
        Self { id: id.into(), sense, evaluator, scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityFunction {
    pub terms: Vec<ObjectiveTerm>,
}

impl UtilityFunction {
    pub fn value(&self, profile: &WaitingProfile) -> f64 {
        self.terms
            .iter()
            .fold(0.0, |acc, t| acc + t.sense.sign() * (t.scale * t.evaluator.evaluate(profile)))
    }

    /// Same terms with every evaluator multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.scale *= factor;
        }
        out
    }
}

/// U = -(average waiting of all vehicles + total waiting of priority vehicles).
pub fn build_traffic_utility() -> UtilityFunction {
    UtilityFunction {
        terms: vec![
            ObjectiveTerm::new("average-waiting-all", Sense::Minimise, Evaluator::AverageWaitingAll),
            ObjectiveTerm::new("total-waiting-priority", Sense::Minimise, Evaluator::TotalWaitingPriority),
        ],
    }
}

/// Vehicles that would be held up if `stopping` stops: the stopping vehicle
/// plus, transitively, every vehicle whose forward cell holds a member.
pub fn affected_set(world: &WorldState, stopping: VehicleId) -> Result<BTreeSet<VehicleId>, ReasoningError> {
    let start = world.vehicle(stopping).ok_or(WorldError::UnknownVehicle(stopping))?;
    if !start.is_active() {
        return Err(WorldError::InactiveVehicle(stopping).into());
    }
    let n = world.grid_size();
    let mut behind: BTreeMap<Position, Vec<VehicleId>> = BTreeMap::new();
    for v in world.active_vehicles() {
        if let Some(t) = v.forward_cell(n) {
            behind.entry(t).or_default().push(v.id);
        }
    }
    let mut set = BTreeSet::from([stopping]);
    let mut queue = VecDeque::from([stopping]);
    while let Some(id) = queue.pop_front() {
        let pos = world.vehicle(id).expect("member exists").position;
        for follower in behind.get(&pos).into_iter().flatten() {
            if set.insert(*follower) {
                queue.push_back(*follower);
            }
        }
    }
    Ok(set)
}

/// Utility of the one-step projection in which `agent` obeys `norm`.
/// The world is not modified.
pub fn accumulated_utility(
    world: &WorldState,
    norm_set: &NormSet,
    utility: &UtilityFunction,
    agent: VehicleId,
    norm: NormId,
) -> Result<f64, ReasoningError> {
    let view = local_view(world, agent)?;
    let applicable = norm_set.get(norm).is_some_and(|n| n.active && matches(&n.precondition, &view));
    if !applicable {
        return Err(ReasoningError::NotApplicable { vehicle: agent, norm });
    }
    let affected = affected_set(world, agent)?;
    let mut profile = WaitingProfile::of_world(world);
    for id in affected {
        profile.add_waiting(world.vehicle(id).expect("affected vehicle exists").kind, 1);
    }
    Ok(utility.value(&profile))
}

/// Vehicles grouped by the cell they want to enter next. Vehicles heading off
/// the grid form singleton groups. Groups are ordered by their lowest id.
pub fn contention_groups(world: &WorldState) -> Vec<Vec<VehicleId>> {
    let n = world.grid_size();
    let mut by_target: BTreeMap<Position, Vec<VehicleId>> = BTreeMap::new();
    let mut groups = Vec::new();
    for v in world.active_vehicles() {
        match v.forward_cell(n) {
            Some(t) => by_target.entry(t).or_default().push(v.id),
            None => groups.push(vec![v.id]),
        }
    }
    groups.extend(by_target.into_values());
    groups.sort_by_key(|g| g[0]);
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub vehicle: VehicleId,
    pub norm: NormId,
    pub utility: Option<f64>,
}

/// Outcome of reasoning for one step: which vehicles apply which norm, and
/// the scored candidates of every contested group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Resolution {
    pub assignments: BTreeMap<VehicleId, Option<NormId>>,
    pub contested: Vec<Vec<Candidate>>,
}

impl Resolution {
    pub fn assigned(&self) -> impl Iterator<Item = (VehicleId, NormId)> + '_ {
        self.assignments.iter().filter_map(|(v, n)| n.map(|n| (*v, n)))
    }
}

const TIE_TOLERANCE: f64 = 1e-9;

/// Assigns at most one norm per contention group. When candidates come from
/// two or more vehicles the one with maximal accumulated utility wins; near
/// ties go to the lowest (norm id, vehicle id).
pub fn resolve_unmatchable(
    world: &WorldState,
    norm_set: &NormSet,
    utility: &UtilityFunction,
) -> Result<Resolution, ReasoningError> {
    let mut resolution = Resolution::default();
    for group in contention_groups(world) {
        let mut candidates: Vec<Candidate> = Vec::new();
        for &vehicle in &group {
            resolution.assignments.insert(vehicle, None);
            let view = local_view(world, vehicle)?;
            candidates.extend(
                norm_set.applicable(&view).into_iter().map(|n: &Norm| Candidate { vehicle, norm: n.id, utility: None }),
            );
        }
        if candidates.is_empty() {
            continue;
        }
        let distinct: BTreeSet<VehicleId> = candidates.iter().map(|c| c.vehicle).collect();
        let winner = if distinct.len() == 1 {
            candidates.iter().min_by_key(|c| (c.norm, c.vehicle)).expect("non-empty").clone()
        } else {
            for c in &mut candidates {
                c.utility = Some(accumulated_utility(world, norm_set, utility, c.vehicle, c.norm)?);
            }
            let best = candidates.iter().filter_map(|c| c.utility).fold(f64::NEG_INFINITY, f64::max);
            let tol = TIE_TOLERANCE * best.abs().max(1.0);
            let w = candidates
                .iter()
                .filter(|c| c.utility.is_some_and(|u| u >= best - tol))
                .min_by_key(|c| (c.norm, c.vehicle))
                .expect("maximum exists")
                .clone();
            resolution.contested.push(candidates);
            w
        };
        resolution.assignments.insert(winner.vehicle, Some(winner.norm));
    }
    Ok(resolution)
}
