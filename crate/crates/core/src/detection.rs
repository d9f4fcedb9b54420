//! Conflict detection over one view transition and classification of norm
//! applications into the four outcome sets used by evaluation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{local_view, Decision, Heading, LocalView, Occupant, Position, VehicleId, WorldState};
use crate::norms::{matches, NormId, NormSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransitionError {
    #[error("snapshot at step {before} cannot precede world at step {after}")]
    StepMismatch { before: u64, after: u64 },
}

/// One vehicle as seen before decisions executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub position: Position,
    pub heading: Heading,
    pub view: LocalView,
    pub decision: Decision,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ViewSnapshot {
    pub time_step: u64,
    pub entries: BTreeMap<VehicleId, SnapshotEntry>,
}

impl ViewSnapshot {
    /// Captures every active vehicle's view with the decision it is about to take.
    pub fn capture(world: &WorldState, decisions: &BTreeMap<VehicleId, Decision>) -> Self {
        let entries = world
            .active_vehicles()
            .map(|v| {
                let view = local_view(world, v.id).expect("active vehicle has a view");
                let decision = decisions.get(&v.id).copied().unwrap_or(Decision::Go);
                (v.id, SnapshotEntry { position: v.position, heading: v.heading, view, decision })
            })
            .collect();
        Self { time_step: world.time_step, entries }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ViewTransition<'a> {
    pub before: &'a ViewSnapshot,
    pub after: &'a WorldState,
}

impl<'a> ViewTransition<'a> {
    pub fn new(before: &'a ViewSnapshot, after: &'a WorldState) -> Result<Self, TransitionError> {
        if before.time_step + 1 != after.time_step {
            return Err(TransitionError::StepMismatch { before: before.time_step, after: after.time_step });
        }
        Ok(Self { before, after })
    }

    /// Whether a collision happened in `cell` during this transition.
    pub fn collision_at(&self, cell: Position) -> bool {
        matches!(
            self.after.occupant(cell),
            Some(Occupant::Collision { step, .. }) if *step == self.after.time_step
        )
    }

    fn target_of(&self, entry: &SnapshotEntry) -> Option<Position> {
        entry.position.step(entry.heading, self.after.grid_size())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Responsible {
    pub vehicle: VehicleId,
    /// The vehicle's local view one step before the collision.
    pub context: LocalView,
    pub action: Decision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub time_step: u64,
    pub cell: Position,
    pub responsible: Vec<Responsible>,
}

/// One conflict per cell where two or more vehicles arrived in this transition.
pub fn detect_conflicts(transition: &ViewTransition<'_>) -> Vec<Conflict> {
    let step = transition.after.time_step;
    transition
        .after
        .occupancy()
        .iter()
        .filter_map(|(cell, occupant)| match occupant {
            Occupant::Collision { step: s, vehicles } if *s == step => {
                let responsible: Vec<Responsible> = vehicles
                    .iter()
                    .filter_map(|id| {
                        transition.before.entries.get(id).map(|e| Responsible {
                            vehicle: *id,
                            context: e.view,
                            action: e.decision,
                        })
                    })
                    .collect();
                Some(Conflict { time_step: step, cell: *cell, responsible })
            }
            _ => None,
        })
        .collect()
}

/// Norms a vehicle was told to apply this step and whether it complied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Compliance {
    pub norms: Vec<NormId>,
    pub obeyed: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplicationCounts {
    pub applied_conflict: u64,
    pub applied_no_conflict: u64,
    pub violated_conflict: u64,
    pub violated_no_conflict: u64,
}

impl ApplicationCounts {
    pub fn total(&self) -> u64 {
        self.applied_conflict + self.applied_no_conflict + self.violated_conflict + self.violated_no_conflict
    }

    pub fn add(&mut self, other: &ApplicationCounts) {
        self.applied_conflict += other.applied_conflict;
        self.applied_no_conflict += other.applied_no_conflict;
        self.violated_conflict += other.violated_conflict;
        self.violated_no_conflict += other.violated_no_conflict;
    }
}

/// Sorts every (vehicle, assigned norm) pair into applied/violated crossed
/// with conflict/no conflict. A vehicle is in conflict when its own target
/// cell hosted a collision. Norms that were dismissed never reach
/// `compliance` and so are not counted.
pub fn classify_applications(
    transition: &ViewTransition<'_>,
    norm_set: &NormSet,
    compliance: &BTreeMap<VehicleId, Compliance>,
) -> BTreeMap<NormId, ApplicationCounts> {
    let mut counts: BTreeMap<NormId, ApplicationCounts> = BTreeMap::new();
    for (vehicle, record) in compliance {
        let Some(entry) = transition.before.entries.get(vehicle) else {
            continue;
        };
        let conflict = transition.target_of(entry).is_some_and(|t| transition.collision_at(t));
        for norm_id in &record.norms {
            let applicable = norm_set.get(*norm_id).is_some_and(|n| matches(&n.precondition, &entry.view));
            if !applicable {
                continue;
            }
            let c = counts.entry(*norm_id).or_default();
            match (record.obeyed, conflict) {
                (true, true) => c.applied_conflict += 1,
                (true, false) => c.applied_no_conflict += 1,
                (false, true) => c.violated_conflict += 1,
                (false, false) => c.violated_no_conflict += 1,
            }
        }
    }
    counts
}
