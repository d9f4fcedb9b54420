//! Discrete-time traffic world: a square grid crossed by two orthogonal
//! two-lane roads, vehicles that spawn on lane entries and drive straight to
//! the far boundary, and the local views they use to match norms.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_GRID_SIZE: usize = 19;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorldError {
    #[error("unknown vehicle {0}")]
    UnknownVehicle(VehicleId),
    #[error("vehicle {0} is not active")]
    InactiveVehicle(VehicleId),
    #[error("no decision supplied for active vehicle {0}")]
    MissingDecision(VehicleId),
    #[error("cell {0} is outside a {1}x{1} grid")]
    OutOfBounds(Position, usize),
    #[error("cell {0} is already occupied")]
    Occupied(Position),
    #[error("grid size {0} is too small for a two-road junction (minimum 4)")]
    GridTooSmall(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VehicleId(pub u32);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub row: usize,
    pub col: usize,
}

impl Position {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Cell one step away along `heading`, or `None` when that leaves the grid.
    pub fn step(self, heading: Heading, grid_size: usize) -> Option<Position> {
        self.offset(heading.delta(), grid_size)
    }

    pub fn offset(self, (dr, dc): (isize, isize), grid_size: usize) -> Option<Position> {
        let row = self.row.checked_add_signed(dr)?;
        let col = self.col.checked_add_signed(dc)?;
        (row < grid_size && col < grid_size).then_some(Position { row, col })
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// Travel direction. Rows grow southwards, columns grow eastwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub const fn delta(self) -> (isize, isize) {
        match self {
            Heading::North => (-1, 0),
            Heading::East => (0, 1),
            Heading::South => (1, 0),
            Heading::West => (0, -1),
        }
    }

    /// Direction of a quarter turn to the left.
    pub const fn left(self) -> Heading {
        match self {
            Heading::North => Heading::West,
            Heading::East => Heading::North,
            Heading::South => Heading::East,
            Heading::West => Heading::South,
        }
    }

    pub const fn right(self) -> Heading {
        match self {
            Heading::North => Heading::East,
            Heading::East => Heading::South,
            Heading::South => Heading::West,
            Heading::West => Heading::North,
        }
    }

    pub const fn opposite(self) -> Heading {
        self.left().left()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VehicleKind {
    Ordinary,
    Priority,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VehicleState {
    Moving,
    Stopped,
    Collided,
    Exited,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: VehicleId,
    pub kind: VehicleKind,
    pub position: Position,
    pub heading: Heading,
    pub destination: Position,
    pub spawn_step: u64,
    pub waiting_steps: u64,
    pub state: VehicleState,
}

impl Vehicle {
    /// Moving or Stopped: the vehicle takes a decision this step.
    pub fn is_active(&self) -> bool {
        matches!(self.state, VehicleState::Moving | VehicleState::Stopped)
    }

    /// The cell the vehicle would enter if it went, regardless of whether it
    /// stopped last step.
    pub fn forward_cell(&self, grid_size: usize) -> Option<Position> {
        self.position.step(self.heading, grid_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Axis {
    /// Lane runs along a row.
    Horizontal,
    /// Lane runs along a column.
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Lane {
    pub axis: Axis,
    /// Row index for horizontal lanes, column index for vertical ones.
    pub index: usize,
    pub heading: Heading,
}

impl Lane {
    pub fn entry(&self, grid_size: usize) -> Position {
        let last = grid_size - 1;
        match self.heading {
            Heading::East => Position::new(self.index, 0),
            Heading::West => Position::new(self.index, last),
            Heading::South => Position::new(0, self.index),
            Heading::North => Position::new(last, self.index),
        }
    }

    pub fn exit(&self, grid_size: usize) -> Position {
        let last = grid_size - 1;
        match self.heading {
            Heading::East => Position::new(self.index, last),
            Heading::West => Position::new(self.index, 0),
            Heading::South => Position::new(last, self.index),
            Heading::North => Position::new(0, self.index),
        }
    }

    pub fn contains(&self, p: Position) -> bool {
        match self.axis {
            Axis::Horizontal => p.row == self.index,
            Axis::Vertical => p.col == self.index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoadMap {
    pub grid_size: usize,
    pub lanes: Vec<Lane>,
    pub junction_cells: BTreeSet<Position>,
}

impl RoadMap {
    /// Two orthogonal roads through the centre of the grid, each with one lane
    /// per direction. Traffic keeps left: eastbound on the northern row,
    /// northbound on the western column.
    pub fn two_roads(grid_size: usize) -> Result<Self, WorldError> {
        if grid_size < 4 {
            return Err(WorldError::GridTooSmall(grid_size));
        }
        let lo = (grid_size - 1) / 2;
        let hi = lo + 1;
        let lanes = vec![
            Lane { axis: Axis::Horizontal, index: lo, heading: Heading::East },
            Lane { axis: Axis::Horizontal, index: hi, heading: Heading::West },
            Lane { axis: Axis::Vertical, index: lo, heading: Heading::North },
            Lane { axis: Axis::Vertical, index: hi, heading: Heading::South },
        ];
        let mut junction_cells = BTreeSet::new();
        for h in lanes.iter().filter(|l| l.axis == Axis::Horizontal) {
            for v in lanes.iter().filter(|l| l.axis == Axis::Vertical) {
                junction_cells.insert(Position::new(h.index, v.index));
            }
        }
        Ok(Self { grid_size, lanes, junction_cells })
    }

    pub fn lane_of(&self, p: Position, heading: Heading) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.heading == heading && l.contains(p))
    }

    pub fn entry_cells(&self) -> Vec<Position> {
        self.lanes.iter().map(|l| l.entry(self.grid_size)).collect()
    }
}

impl Default for RoadMap {
    fn default() -> Self {
        Self::two_roads(DEFAULT_GRID_SIZE).expect("default grid is large enough")
    }
}

/// What an observing vehicle sees in one neighbour cell, expressed in the
/// observer's own frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CellDescriptor {
    Empty,
    SameHeading,
    OppositeHeading,
    /// The neighbour travels towards the observer's right, i.e. crosses from the left.
    HeadingFromLeft,
    /// The neighbour travels towards the observer's left, i.e. crosses from the right.
    HeadingFromRight,
}

impl CellDescriptor {
    pub const ALL: [CellDescriptor; 5] = [
        CellDescriptor::Empty,
        CellDescriptor::SameHeading,
        CellDescriptor::OppositeHeading,
        CellDescriptor::HeadingFromLeft,
        CellDescriptor::HeadingFromRight,
    ];

    pub fn relative(observer: Heading, other: Heading) -> Self {
        if other == observer {
            CellDescriptor::SameHeading
        } else if other == observer.opposite() {
            CellDescriptor::OppositeHeading
        } else if other == observer.right() {
            CellDescriptor::HeadingFromLeft
        } else {
            CellDescriptor::HeadingFromRight
        }
    }

    pub fn symbol(self) -> char {
        match self {
            CellDescriptor::Empty => '-',
            CellDescriptor::SameHeading => '^',
            CellDescriptor::OppositeHeading => 'v',
            CellDescriptor::HeadingFromLeft => '<',
            CellDescriptor::HeadingFromRight => '>',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.symbol() == c)
    }
}

/// Descriptors of the three cells in the row ahead of a vehicle:
/// front-left diagonal, directly ahead, front-right diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LocalView {
    pub left: CellDescriptor,
    pub front: CellDescriptor,
    pub right: CellDescriptor,
}

impl LocalView {
    pub const EMPTY: LocalView = LocalView {
        left: CellDescriptor::Empty,
        front: CellDescriptor::Empty,
        right: CellDescriptor::Empty,
    };

    pub const fn new(left: CellDescriptor, front: CellDescriptor, right: CellDescriptor) -> Self {
        Self { left, front, right }
    }

    pub fn slots(&self) -> [CellDescriptor; 3] {
        [self.left, self.front, self.right]
    }

    /// All 125 possible views.
    pub fn all() -> impl Iterator<Item = LocalView> {
        CellDescriptor::ALL.into_iter().flat_map(|l| {
            CellDescriptor::ALL.into_iter().flat_map(move |f| {
                CellDescriptor::ALL.into_iter().map(move |r| LocalView::new(l, f, r))
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Occupant {
    Vehicle(VehicleId),
    /// Wreck left by a collision at `step`; the listed vehicles share the cell.
    Collision { step: u64, vehicles: Vec<VehicleId> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Go,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorityRatio {
    pub priority: u32,
    pub ordinary: u32,
}

impl PriorityRatio {
    pub fn probability(&self) -> f64 {
        let total = self.priority + self.ordinary;
        if total == 0 {
            0.0
        } else {
            f64::from(self.priority) / f64::from(total)
        }
    }
}

impl Default for PriorityRatio {
    fn default() -> Self {
        Self { priority: 12, ordinary: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpawnConfig {
    pub spawn_min: u32,
    pub spawn_max: u32,
    pub priority_ratio: PriorityRatio,
}

impl Default for SpawnConfig {
    fn default() -> Self {
        Self { spawn_min: 2, spawn_max: 8, priority_ratio: PriorityRatio::default() }
    }
}

/// Movement targets for one step. Vehicles heading off the grid are listed
/// in `exiting` and have no target.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntendedMoves {
    pub targets: BTreeMap<VehicleId, Position>,
    pub exiting: Vec<VehicleId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollisionEvent {
    pub cell: Position,
    pub vehicles: Vec<VehicleId>,
}

/// Everything that happened during one `apply_moves` call.
#[derive(Debug, Clone, Default)]
pub struct MoveOutcome {
    /// Vehicles that advanced a cell, exited, or drove into a collision.
    pub moved: Vec<VehicleId>,
    /// Vehicles that chose Go but found their target held by a vehicle that stayed.
    pub blocked: Vec<VehicleId>,
    /// Vehicles that chose Stop.
    pub stopped: Vec<VehicleId>,
    pub collisions: Vec<CollisionEvent>,
    /// Vehicles that left the grid this step, with their final state.
    pub exited: Vec<Vehicle>,
    /// Wrecks from the previous step cleared at the end of this one.
    pub cleared: Vec<Vehicle>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WorldState {
    pub time_step: u64,
    pub roadmap: RoadMap,
    vehicles: BTreeMap<VehicleId, Vehicle>,
    occupancy: BTreeMap<Position, Occupant>,
    next_id: u32,
}

impl WorldState {
    pub fn new(roadmap: RoadMap) -> Self {
        Self { time_step: 0, roadmap, vehicles: BTreeMap::new(), occupancy: BTreeMap::new(), next_id: 0 }
    }

    pub fn grid_size(&self) -> usize {
        self.roadmap.grid_size
    }

    pub fn vehicle(&self, id: VehicleId) -> Option<&Vehicle> {
        self.vehicles.get(&id)
    }

    /// All vehicles still on the grid, including wrecks, in id order.
    pub fn vehicles(&self) -> impl Iterator<Item = &Vehicle> {
        self.vehicles.values()
    }

    pub fn active_vehicles(&self) -> impl Iterator<Item = &Vehicle> {
        self.vehicles.values().filter(|v| v.is_active())
    }

    pub fn occupant(&self, p: Position) -> Option<&Occupant> {
        self.occupancy.get(&p)
    }

    pub fn occupancy(&self) -> &BTreeMap<Position, Occupant> {
        &self.occupancy
    }

    /// Puts a vehicle on an arbitrary free cell. Its destination is the far
    /// boundary cell along its heading.
    pub fn place_vehicle(
        &mut self,
        position: Position,
        heading: Heading,
        kind: VehicleKind,
    ) -> Result<VehicleId, WorldError> {
        let n = self.grid_size();
        if position.row >= n || position.col >= n {
            return Err(WorldError::OutOfBounds(position, n));
        }
        if self.occupancy.contains_key(&position) {
            return Err(WorldError::Occupied(position));
        }
        let last = n - 1;
        let destination = match heading {
            Heading::East => Position::new(position.row, last),
            Heading::West => Position::new(position.row, 0),
            Heading::South => Position::new(last, position.col),
            Heading::North => Position::new(0, position.col),
        };
        let id = VehicleId(self.next_id);
        self.next_id += 1;
        self.vehicles.insert(
            id,
            Vehicle {
                id,
                kind,
                position,
                heading,
                destination,
                spawn_step: self.time_step,
                waiting_steps: 0,
                state: VehicleState::Moving,
            },
        );
        self.occupancy.insert(position, Occupant::Vehicle(id));
        Ok(id)
    }

    /// Overrides a vehicle's accumulated waiting; used to script scenarios.
    pub fn set_waiting(&mut self, id: VehicleId, waiting_steps: u64) -> Result<(), WorldError> {
        let v = self.vehicles.get_mut(&id).ok_or(WorldError::UnknownVehicle(id))?;
        v.waiting_steps = waiting_steps;
        Ok(())
    }

    fn describe(&self, observer: Heading, cell: Option<Position>) -> CellDescriptor {
        let Some(cell) = cell else {
            return CellDescriptor::Empty;
        };
        let other = match self.occupancy.get(&cell) {
            None => return CellDescriptor::Empty,
            Some(Occupant::Vehicle(id)) => *id,
            Some(Occupant::Collision { vehicles, .. }) => match vehicles.iter().min() {
                Some(id) => *id,
                None => return CellDescriptor::Empty,
            },
        };
        CellDescriptor::relative(observer, self.vehicles[&other].heading)
    }

    /// Rotates every vehicle a quarter turn clockwise about the grid centre.
    /// The road map is left unchanged; only vehicle geometry moves.
    pub fn rotated_clockwise(&self) -> WorldState {
        let n = self.grid_size();
        let rot = |p: Position| Position::new(p.col, n - 1 - p.row);
        let mut out = self.clone();
        out.vehicles = self
            .vehicles
            .iter()
            .map(|(id, v)| {
                let mut v = v.clone();
                v.position = rot(v.position);
                v.destination = rot(v.destination);
                v.heading = v.heading.right();
                (*id, v)
            })
            .collect();
        out.occupancy = self.occupancy.iter().map(|(p, o)| (rot(*p), o.clone())).collect();
        out
    }
}

pub fn spawn_vehicles<R: Rng + ?Sized>(
    world: &mut WorldState,
    rng: &mut R,
    config: &SpawnConfig,
) -> Vec<Vehicle> {
    let n = world.grid_size();
    let lanes = world.roadmap.lanes.clone();
    let p_priority = config.priority_ratio.probability();
    let count = if config.spawn_max == 0 { 0 } else { rng.gen_range(config.spawn_min..=config.spawn_max) };
    let mut spawned = Vec::new();
    // The same number of draws is consumed whether or not a vehicle fits, so
    // runs sharing a seed see the same spawn stream.
    for _ in 0..count {
        let lane = lanes[rng.gen_range(0..lanes.len())];
        let priority = rng.gen_bool(p_priority);
        let entry = lane.entry(n);
        if world.occupancy.contains_key(&entry) {
            continue;
        }
        let kind = if priority { VehicleKind::Priority } else { VehicleKind::Ordinary };
        let id = VehicleId(world.next_id);
        world.next_id += 1;
        let vehicle = Vehicle {
            id,
            kind,
            position: entry,
            heading: lane.heading,
            destination: lane.exit(n),
            spawn_step: world.time_step,
            waiting_steps: 0,
            state: VehicleState::Moving,
        };
        world.occupancy.insert(entry, Occupant::Vehicle(id));
        world.vehicles.insert(id, vehicle.clone());
        spawned.push(vehicle);
    }
    spawned
}

pub fn local_view(world: &WorldState, id: VehicleId) -> Result<LocalView, WorldError> {
    let v = world.vehicle(id).ok_or(WorldError::UnknownVehicle(id))?;
    if v.state == VehicleState::Exited {
        return Err(WorldError::InactiveVehicle(id));
    }
    let n = world.grid_size();
    let h = v.heading;
    let (fr, fc) = h.delta();
    let (lr, lc) = h.left().delta();
    let (rr, rc) = h.right().delta();
    let p = v.position;
    Ok(LocalView {
        left: world.describe(h, p.offset((fr + lr, fc + lc), n)),
        front: world.describe(h, p.offset((fr, fc), n)),
        right: world.describe(h, p.offset((fr + rr, fc + rc), n)),
    })
}

pub fn intended_moves(world: &WorldState) -> IntendedMoves {
    let n = world.grid_size();
    let mut out = IntendedMoves::default();
    for v in world.vehicles() {
        match v.state {
            VehicleState::Moving => match v.forward_cell(n) {
                Some(t) => {
                    out.targets.insert(v.id, t);
                }
                None => out.exiting.push(v.id),
            },
            VehicleState::Stopped | VehicleState::Collided => {
                out.targets.insert(v.id, v.position);
            }
            VehicleState::Exited => {}
        }
    }
    out
}

/// Advances the world by one step given a Go/Stop decision for every active
/// vehicle.
///
/// Moves are simultaneous: a vehicle may enter a cell whose occupant leaves
/// in the same step. A Go into a cell held by a vehicle that stays (stopped,
/// blocked or wrecked) is blocked and counts as waiting. Two or more unblocked
/// vehicles entering the same cell collide there; the wreck blocks the cell
/// for one further step and is then cleared.
pub fn apply_moves(
    world: &mut WorldState,
    decisions: &BTreeMap<VehicleId, Decision>,
) -> Result<MoveOutcome, WorldError> {
    let n = world.grid_size();
    let active: Vec<VehicleId> = world.active_vehicles().map(|v| v.id).collect();
    for id in &active {
        if !decisions.contains_key(id) {
            return Err(WorldError::MissingDecision(*id));
        }
    }

    let mut outcome = MoveOutcome::default();
    let mut staying: BTreeSet<Position> = world
        .occupancy
        .iter()
        .filter(|(_, o)| matches!(o, Occupant::Collision { .. }))
        .map(|(p, _)| *p)
        .collect();
    let mut movers: BTreeMap<VehicleId, Option<Position>> = BTreeMap::new();
    for id in &active {
        let v = &world.vehicles[id];
        match decisions[id] {
            Decision::Stop => {
                staying.insert(v.position);
                outcome.stopped.push(*id);
            }
            Decision::Go => {
                movers.insert(*id, v.forward_cell(n));
            }
        }
    }

    // Greatest fixed point: a mover is blocked once its target is known to stay occupied.
    let mut blocked: BTreeSet<VehicleId> = BTreeSet::new();
    loop {
        let mut changed = false;
        for (id, target) in &movers {
            if blocked.contains(id) {
                continue;
            }
            if let Some(t) = target {
                if staying.contains(t) {
                    blocked.insert(*id);
                    staying.insert(world.vehicles[id].position);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut arrivals: BTreeMap<Position, Vec<VehicleId>> = BTreeMap::new();
    let mut leaving: Vec<VehicleId> = Vec::new();
    for (id, target) in &movers {
        if blocked.contains(id) {
            continue;
        }
        match target {
            Some(t) => arrivals.entry(*t).or_default().push(*id),
            None => leaving.push(*id),
        }
    }

    let new_step = world.time_step + 1;

    // Clear wrecks from the previous step.
    let old_wrecks: Vec<Position> = world
        .occupancy
        .iter()
        .filter(|(_, o)| matches!(o, Occupant::Collision { .. }))
        .map(|(p, _)| *p)
        .collect();
    for p in old_wrecks {
        if let Some(Occupant::Collision { vehicles, .. }) = world.occupancy.remove(&p) {
            for id in vehicles {
                if let Some(v) = world.vehicles.remove(&id) {
                    outcome.cleared.push(v);
                }
            }
        }
    }

    for id in &active {
        let p = world.vehicles[id].position;
        if world.occupancy.get(&p) == Some(&Occupant::Vehicle(*id)) {
            world.occupancy.remove(&p);
        }
    }

    for id in outcome.stopped.iter().chain(blocked.iter()) {
        let v = world.vehicles.get_mut(id).expect("active vehicle");
        v.waiting_steps += 1;
        v.state = VehicleState::Stopped;
        world.occupancy.insert(v.position, Occupant::Vehicle(*id));
    }
    outcome.blocked = blocked.into_iter().collect();

    for id in leaving {
        let mut v = world.vehicles.remove(&id).expect("active vehicle");
        v.state = VehicleState::Exited;
        outcome.moved.push(id);
        outcome.exited.push(v);
    }

    for (cell, ids) in arrivals {
        if ids.len() >= 2 {
            for id in &ids {
                let v = world.vehicles.get_mut(id).expect("active vehicle");
                v.position = cell;
                v.state = VehicleState::Collided;
                outcome.moved.push(*id);
            }
            world.occupancy.insert(cell, Occupant::Collision { step: new_step, vehicles: ids.clone() });
            outcome.collisions.push(CollisionEvent { cell, vehicles: ids });
        } else {
            let id = ids[0];
            outcome.moved.push(id);
            let v = world.vehicles.get_mut(&id).expect("active vehicle");
            v.position = cell;
            if cell == v.destination {
                v.state = VehicleState::Exited;
                let v = world.vehicles.remove(&id).expect("active vehicle");
                outcome.exited.push(v);
            } else {
                v.state = VehicleState::Moving;
                world.occupancy.insert(cell, Occupant::Vehicle(id));
            }
        }
    }
    outcome.moved.sort();

    world.time_step = new_step;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn world() -> WorldState {
        WorldState::new(RoadMap::default())
    }

    fn all_go(w: &WorldState) -> BTreeMap<VehicleId, Decision> {
        w.active_vehicles().map(|v| (v.id, Decision::Go)).collect()
    }

    fn go_all(w: &mut WorldState) -> Result<MoveOutcome, WorldError> {
        let d = all_go(w);
        apply_moves(w, &d)
    }

    #[test]
    fn default_roadmap_has_four_junction_cells() {
        let map = RoadMap::default();
        assert_eq!(map.lanes.len(), 4);
        assert_eq!(map.junction_cells.len(), 4);
        assert!(map.junction_cells.contains(&Position::new(9, 9)));
        assert!(map.junction_cells.contains(&Position::new(10, 10)));
        for lane in &map.lanes {
            assert!(lane.contains(lane.entry(19)));
            assert!(lane.contains(lane.exit(19)));
        }
    }

    #[test]
    fn tiny_grid_rejected() {
        assert_eq!(RoadMap::two_roads(3), Err(WorldError::GridTooSmall(3)));
    }

    #[test]
    fn spawn_count_within_bounds() {
        let cfg = SpawnConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let mut w = world();
            let before = rng.clone();
            let spawned = spawn_vehicles(&mut w, &mut rng, &cfg);
            let mut replay = before;
            let drawn = replay.gen_range(2..=8u32);
            assert!((2..=8).contains(&drawn));
            assert!(spawned.len() <= 4 && spawned.len() as u32 <= drawn);
            for v in &spawned {
                let lane = w.roadmap.lane_of(v.position, v.heading).unwrap();
                assert_eq!(v.position, lane.entry(19));
                assert_eq!(v.destination, lane.exit(19));
            }
        }
    }

    #[test]
    fn full_entries_spawn_nothing() {
        let mut w = world();
        for lane in w.roadmap.lanes.clone() {
            w.place_vehicle(lane.entry(19), lane.heading, VehicleKind::Ordinary).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(spawn_vehicles(&mut w, &mut rng, &SpawnConfig::default()).is_empty());
    }

    #[test]
    fn priority_fraction_matches_ratio() {
        let cfg = SpawnConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let (mut total, mut priority) = (0usize, 0usize);
        while total < 10_000 {
            let mut w = world();
            for v in spawn_vehicles(&mut w, &mut rng, &cfg) {
                total += 1;
                priority += usize::from(v.kind == VehicleKind::Priority);
            }
        }
        let frac = priority as f64 / total as f64;
        assert!((frac - 12.0 / 112.0).abs() < 0.01, "priority fraction {frac}");
    }

    #[test]
    fn lone_vehicle_sees_nothing() {
        let mut w = world();
        let a = w.place_vehicle(Position::new(9, 3), Heading::East, VehicleKind::Ordinary).unwrap();
        assert_eq!(local_view(&w, a).unwrap(), LocalView::EMPTY);
    }

    #[test]
    fn crossing_vehicle_on_the_right() {
        // A approaches the junction eastbound; B is northbound inside it, ahead-right of A.
        let mut w = world();
        let a = w.place_vehicle(Position::new(9, 8), Heading::East, VehicleKind::Ordinary).unwrap();
        let b = w.place_vehicle(Position::new(10, 9), Heading::North, VehicleKind::Ordinary).unwrap();
        use CellDescriptor::*;
        assert_eq!(local_view(&w, a).unwrap(), LocalView::new(Empty, Empty, HeadingFromRight));
        assert_eq!(local_view(&w, b).unwrap(), LocalView::new(HeadingFromLeft, Empty, Empty));
    }

    #[test]
    fn nose_to_nose_sees_opposite() {
        let mut w = world();
        let a = w.place_vehicle(Position::new(9, 4), Heading::East, VehicleKind::Ordinary).unwrap();
        let b = w.place_vehicle(Position::new(9, 5), Heading::West, VehicleKind::Ordinary).unwrap();
        assert_eq!(local_view(&w, a).unwrap().front, CellDescriptor::OppositeHeading);
        assert_eq!(local_view(&w, b).unwrap().front, CellDescriptor::OppositeHeading);
    }

    #[test]
    fn view_at_grid_edge_is_empty_off_grid() {
        let mut w = world();
        let a = w.place_vehicle(Position::new(0, 10), Heading::North, VehicleKind::Ordinary).unwrap();
        assert_eq!(local_view(&w, a).unwrap(), LocalView::EMPTY);
        assert_eq!(local_view(&w, VehicleId(99)), Err(WorldError::UnknownVehicle(VehicleId(99))));
    }

    #[test]
    fn intended_moves_follow_heading() {
        let mut w = world();
        let a = w.place_vehicle(Position::new(9, 3), Heading::East, VehicleKind::Ordinary).unwrap();
        let b = w.place_vehicle(Position::new(10, 5), Heading::West, VehicleKind::Ordinary).unwrap();
        let c = w.place_vehicle(Position::new(0, 10), Heading::North, VehicleKind::Ordinary).unwrap();
        w.vehicles.get_mut(&b).unwrap().state = VehicleState::Stopped;
        let moves = intended_moves(&w);
        assert_eq!(moves.targets[&a], Position::new(9, 4));
        assert_eq!(moves.targets[&b], Position::new(10, 5));
        assert!(!moves.targets.contains_key(&c));
        assert_eq!(moves.exiting, vec![c]);
    }

    #[test]
    fn off_grid_go_exits() {
        let mut w = world();
        let c = w.place_vehicle(Position::new(0, 10), Heading::North, VehicleKind::Ordinary).unwrap();
        // destination is the cell itself; force a Go off the edge
        let out = apply_moves(&mut w, &BTreeMap::from([(c, Decision::Go)])).unwrap();
        assert_eq!(out.exited.len(), 1);
        assert_eq!(out.exited[0].state, VehicleState::Exited);
        assert!(w.vehicle(c).is_none());
    }

    #[test]
    fn single_go_advances() {
        let mut w = world();
        let a = w.place_vehicle(Position::new(9, 3), Heading::East, VehicleKind::Ordinary).unwrap();
        let out = go_all(&mut w).unwrap();
        assert_eq!(out.moved, vec![a]);
        let v = w.vehicle(a).unwrap();
        assert_eq!(v.position, Position::new(9, 4));
        assert_eq!(v.waiting_steps, 0);
        assert_eq!(w.time_step, 1);
    }

    #[test]
    fn stop_accrues_waiting() {
        let mut w = world();
        let a = w.place_vehicle(Position::new(9, 3), Heading::East, VehicleKind::Ordinary).unwrap();
        apply_moves(&mut w, &BTreeMap::from([(a, Decision::Stop)])).unwrap();
        let v = w.vehicle(a).unwrap();
        assert_eq!(v.waiting_steps, 1);
        assert_eq!(v.state, VehicleState::Stopped);
        assert_eq!(v.position, Position::new(9, 3));
    }

    #[test]
    fn missing_decision_is_an_error() {
        let mut w = world();
        let a = w.place_vehicle(Position::new(9, 3), Heading::East, VehicleKind::Ordinary).unwrap();
        assert_eq!(apply_moves(&mut w, &BTreeMap::new()).unwrap_err(), WorldError::MissingDecision(a));
    }

    #[test]
    fn follower_moves_into_vacated_cell_but_not_behind_stopped() {
        let mut w = world();
        let lead = w.place_vehicle(Position::new(9, 4), Heading::East, VehicleKind::Ordinary).unwrap();
        let tail = w.place_vehicle(Position::new(9, 3), Heading::East, VehicleKind::Ordinary).unwrap();
        go_all(&mut w).unwrap();
        assert_eq!(w.vehicle(tail).unwrap().position, Position::new(9, 4));

        let out = apply_moves(&mut w, &BTreeMap::from([(lead, Decision::Stop), (tail, Decision::Go)])).unwrap();
        assert_eq!(out.blocked, vec![tail]);
        assert_eq!(w.vehicle(tail).unwrap().waiting_steps, 1);
        assert_eq!(w.vehicle(lead).unwrap().waiting_steps, 1);
    }

    #[test]
    fn junction_collision_and_wreck_lifetime() {
        let mut w = world();
        let a = w.place_vehicle(Position::new(9, 8), Heading::East, VehicleKind::Ordinary).unwrap();
        let b = w.place_vehicle(Position::new(10, 9), Heading::North, VehicleKind::Ordinary).unwrap();
        let out = go_all(&mut w).unwrap();
        assert_eq!(out.collisions, vec![CollisionEvent { cell: Position::new(9, 9), vehicles: vec![a, b] }]);
        assert_eq!(w.vehicle(a).unwrap().state, VehicleState::Collided);
        assert_eq!(w.vehicle(b).unwrap().state, VehicleState::Collided);
        assert_eq!(
            w.occupant(Position::new(9, 9)),
            Some(&Occupant::Collision { step: 1, vehicles: vec![a, b] })
        );

        // A follower behind the wreck is blocked for one step, then the wreck is gone.
        let f = w.place_vehicle(Position::new(9, 8), Heading::East, VehicleKind::Ordinary).unwrap();
        let out = go_all(&mut w).unwrap();
        assert_eq!(out.blocked, vec![f]);
        assert_eq!(out.cleared.len(), 2);
        assert!(w.occupant(Position::new(9, 9)).is_none());
        go_all(&mut w).unwrap();
        assert_eq!(w.vehicle(f).unwrap().position, Position::new(9, 9));
    }

    #[test]
    fn junction_rotation_is_not_blocked() {
        let mut w = world();
        let ids = [
            w.place_vehicle(Position::new(9, 9), Heading::East, VehicleKind::Ordinary).unwrap(),
            w.place_vehicle(Position::new(9, 10), Heading::South, VehicleKind::Ordinary).unwrap(),
            w.place_vehicle(Position::new(10, 10), Heading::West, VehicleKind::Ordinary).unwrap(),
            w.place_vehicle(Position::new(10, 9), Heading::North, VehicleKind::Ordinary).unwrap(),
        ];
        let out = go_all(&mut w).unwrap();
        assert!(out.collisions.is_empty());
        assert_eq!(out.moved.len(), 4);
        assert_eq!(w.vehicle(ids[0]).unwrap().position, Position::new(9, 10));
    }

    #[test]
    fn reaching_destination_exits() {
        let mut w = world();
        let a = w.place_vehicle(Position::new(9, 17), Heading::East, VehicleKind::Priority).unwrap();
        w.set_waiting(a, 3).unwrap();
        let out = go_all(&mut w).unwrap();
        assert_eq!(out.exited.len(), 1);
        assert_eq!(out.exited[0].waiting_steps, 3);
        assert!(w.occupancy().is_empty());
    }
}
