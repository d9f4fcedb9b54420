#![allow(dead_code)]

pub mod checks;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use junction_norms::gridworld::{
    CellDescriptor, Heading, LocalView, Position, RoadMap, VehicleId, VehicleKind, WorldState, DEFAULT_GRID_SIZE,
};
use junction_norms::norms::{Precondition, SlotPattern};
use junction_norms::reasoning::{UtilityFunction, WaitingProfile};

/// (lane, offset along the lane, priority, waiting). Lanes: 0 east on row 9,
/// 1 west on row 10, 2 north on col 9, 3 south on col 10.
pub type Placement = (usize, usize, bool, u64);

pub fn lane_cell(lane: usize, offset: usize) -> (Position, Heading) {
    match lane {
        0 => (Position::new(9, offset), Heading::East),
        1 => (Position::new(10, offset), Heading::West),
        2 => (Position::new(offset, 9), Heading::North),
        _ => (Position::new(offset, 10), Heading::South),
    }
}

/// Builds a world from placements, skipping any whose cell is taken.
pub fn build_world(placements: &[Placement]) -> WorldState {
    let mut w = WorldState::new(RoadMap::default());
    for &(lane, offset, priority, waiting) in placements {
        let (pos, heading) = lane_cell(lane, offset);
        if w.occupant(pos).is_some() {
            continue;
        }
        let kind = if priority { VehicleKind::Priority } else { VehicleKind::Ordinary };
        let id = w.place_vehicle(pos, heading, kind).unwrap();
        w.set_waiting(id, waiting).unwrap();
    }
    w
}

pub fn placement() -> impl Strategy<Value = Placement> {
    (0usize..4, 0usize..DEFAULT_GRID_SIZE, prop::bool::weighted(0.25), 0u64..12)
}

pub fn arb_world(max_vehicles: usize) -> impl Strategy<Value = WorldState> {
    prop::collection::vec(placement(), 0..=max_vehicles).prop_map(|p| build_world(&p))
}

/// Worlds packed around the junction so that queues and contention are common.
pub fn arb_dense_world(max_vehicles: usize) -> impl Strategy<Value = WorldState> {
    prop::collection::vec((0usize..4, 5usize..14, prop::bool::weighted(0.25), 0u64..12), 0..=max_vehicles)
        .prop_map(|p| build_world(&p))
}

pub fn arb_descriptor() -> impl Strategy<Value = CellDescriptor> {
    prop::sample::select(CellDescriptor::ALL.to_vec())
}

pub fn arb_slot() -> impl Strategy<Value = SlotPattern> {
    prop_oneof![
        1 => Just(SlotPattern::Wildcard),
        4 => arb_descriptor().prop_map(SlotPattern::Exact),
    ]
}

pub fn arb_precondition() -> impl Strategy<Value = Precondition> {
    (arb_slot(), arb_slot(), arb_slot()).prop_map(|(l, f, r)| Precondition::new(l, f, r))
}

pub fn arb_view() -> impl Strategy<Value = LocalView> {
    (arb_descriptor(), arb_descriptor(), arb_descriptor()).prop_map(|(l, f, r)| LocalView::new(l, f, r))
}

/// Closure of blocked-behind by plain fixed-point iteration over the
/// vehicle list, without any index.
pub fn blocked_set_oracle(world: &WorldState, stopping: VehicleId) -> BTreeSet<VehicleId> {
    let n = world.grid_size();
    let mut set = BTreeSet::from([stopping]);
    loop {
        let occupied: BTreeSet<Position> = set.iter().map(|id| world.vehicle(*id).unwrap().position).collect();
        let mut grew = false;
        for v in world.active_vehicles() {
            if set.contains(&v.id) {
                continue;
            }
            let (dr, dc) = v.heading.delta();
            let r = v.position.row as isize + dr;
            let c = v.position.col as isize + dc;
            if r < 0 || c < 0 || r >= n as isize || c >= n as isize {
                continue;
            }
            if occupied.contains(&Position::new(r as usize, c as usize)) {
                set.insert(v.id);
                grew = true;
            }
        }
        if !grew {
            return set;
        }
    }
}

/// U = -((X_wt + Y_wt)/(X + Y) + Y_wt) over active vehicles, with every
/// member of `blocked` charged one extra waiting step.
pub fn utility_oracle(world: &WorldState, blocked: &BTreeSet<VehicleId>) -> f64 {
    let mut count = 0.0;
    let mut all_waiting = 0.0;
    let mut priority_waiting = 0.0;
    for v in world.active_vehicles() {
        let w = v.waiting_steps as f64 + if blocked.contains(&v.id) { 1.0 } else { 0.0 };
        count += 1.0;
        all_waiting += w;
        if v.kind == VehicleKind::Priority {
            priority_waiting += w;
        }
    }
    if count == 0.0 {
        return 0.0;
    }
    -(all_waiting / count + priority_waiting)
}

/// Profile built by hand, for checking evaluator arithmetic.
pub fn profile(xw: u64, yw: u64, x: u64, y: u64) -> WaitingProfile {
    WaitingProfile { ordinary_count: x, ordinary_waiting: xw, priority_count: y, priority_waiting: yw }
}

pub fn utility_value(u: &UtilityFunction, xw: u64, yw: u64, x: u64, y: u64) -> f64 {
    u.value(&profile(xw, yw, x, y))
}

/// Active vehicles grouped by the cell straight ahead, computed from
/// headings directly. Vehicles about to leave the grid stand alone.
pub fn groups_oracle(world: &WorldState) -> Vec<Vec<VehicleId>> {
    let n = world.grid_size() as isize;
    let mut by_cell: BTreeMap<(isize, isize), Vec<VehicleId>> = BTreeMap::new();
    let mut out = Vec::new();
    for v in world.active_vehicles() {
        let (dr, dc) = v.heading.delta();
        let r = v.position.row as isize + dr;
        let c = v.position.col as isize + dc;
        if r < 0 || c < 0 || r >= n || c >= n {
            out.push(vec![v.id]);
        } else {
            by_cell.entry((r, c)).or_default().push(v.id);
        }
    }
    out.extend(by_cell.into_values());
    out
}
