//! Property bodies shared by the property suite and the acceptance run.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use junction_norms::detection::{classify_applications, ApplicationCounts, Compliance, ViewSnapshot, ViewTransition};
use junction_norms::gridworld::{apply_moves, local_view, CellDescriptor, Decision, LocalView, VehicleId, WorldState};
use junction_norms::norms::{matches, NormGraph, NormId, NormSet, Precondition, SlotPattern};
use junction_norms::reasoning::{accumulated_utility, build_traffic_utility, resolve_unmatchable};

use super::groups_oracle;

pub type CheckResult = Result<(), TestCaseError>;

pub fn hash_of<T: Hash>(x: &T) -> u64 {
    let mut h = DefaultHasher::new();
    x.hash(&mut h);
    h.finish()
}

/// Go or Stop per active vehicle, cycling through `coins`.
pub fn random_decisions(w: &WorldState, coins: &[bool]) -> BTreeMap<VehicleId, Decision> {
    w.active_vehicles()
        .enumerate()
        .map(|(i, v)| (v.id, if coins.get(i % coins.len().max(1)).copied().unwrap_or(true) { Decision::Go } else { Decision::Stop }))
        .collect()
}

pub fn norm_set_of(pres: &[Precondition]) -> NormSet {
    let mut set = NormSet::new();
    for p in pres {
        set.add(*p, 0);
    }
    set
}

pub fn partition(world: WorldState, pres: &[Precondition], coins: &[bool], obey: &[bool]) -> CheckResult {
    let norms = norm_set_of(pres);
    let mut w = world;
    let mut compliance = BTreeMap::new();
    let mut decisions = random_decisions(&w, coins);
    for (i, v) in w.active_vehicles().enumerate() {
        let view = local_view(&w, v.id).unwrap();
        let applicable: Vec<NormId> = norms.applicable(&view).iter().map(|n| n.id).collect();
        if applicable.is_empty() {
            continue;
        }
        let obeyed = obey[i % obey.len()];
        decisions.insert(v.id, if obeyed { Decision::Stop } else { Decision::Go });
        compliance.insert(v.id, Compliance { norms: applicable, obeyed });
    }
    let before = ViewSnapshot::capture(&w, &decisions);
    let out = apply_moves(&mut w, &decisions).unwrap();
    let transition = ViewTransition::new(&before, &w).unwrap();
    let counts = classify_applications(&transition, &norms, &compliance);

    // Oracle: a vehicle is in conflict when a collision happened in the
    // cell straight ahead of it.
    let crash_cells: BTreeSet<_> = out.collisions.iter().map(|c| c.cell).collect();
    let mut expected: BTreeMap<NormId, ApplicationCounts> = BTreeMap::new();
    for (vid, c) in &compliance {
        let e = &before.entries[vid];
        let conflict = e.position.step(e.heading, w.grid_size()).is_some_and(|t| crash_cells.contains(&t));
        for n in &c.norms {
            let slot = expected.entry(*n).or_default();
            match (c.obeyed, conflict) {
                (true, true) => slot.applied_conflict += 1,
                (true, false) => slot.applied_no_conflict += 1,
                (false, true) => slot.violated_conflict += 1,
                (false, false) => slot.violated_no_conflict += 1,
            }
        }
    }
    prop_assert_eq!(&counts, &expected);
    let pairs: usize = compliance.values().map(|c| c.norms.len()).sum();
    prop_assert_eq!(counts.values().map(|c| c.total()).sum::<u64>(), pairs as u64);
    Ok(())
}

pub fn one_per_group(world: &WorldState, pres: &[Precondition]) -> CheckResult {
    let norms = norm_set_of(pres);
    let r = resolve_unmatchable(world, &norms, &build_traffic_utility()).unwrap();
    for group in groups_oracle(world) {
        let has_candidate = group.iter().any(|id| norms.has_applicable(&local_view(world, *id).unwrap()));
        let assigned: Vec<(VehicleId, NormId)> =
            group.iter().filter_map(|id| r.assignments.get(id).copied().flatten().map(|n| (*id, n))).collect();
        prop_assert_eq!(assigned.len(), usize::from(has_candidate), "group {:?}", group);
        for (v, n) in assigned {
            let view = local_view(world, v).unwrap();
            prop_assert!(matches(&norms.get(n).unwrap().precondition, &view));
        }
    }
    let all: BTreeSet<VehicleId> = world.active_vehicles().map(|v| v.id).collect();
    prop_assert_eq!(r.assignments.keys().copied().collect::<BTreeSet<_>>(), all);
    Ok(())
}

pub fn argmax_under_scaling(world: &WorldState, pres: &[Precondition], factor: f64) -> CheckResult {
    let norms = norm_set_of(pres);
    let u = build_traffic_utility();
    let a = resolve_unmatchable(world, &norms, &u).unwrap();
    let b = resolve_unmatchable(world, &norms, &u.scaled(factor)).unwrap();
    prop_assert_eq!(a.assignments, b.assignments);
    Ok(())
}

pub fn projection_purity(world: &WorldState, pres: &[Precondition]) -> CheckResult {
    let norms = norm_set_of(pres);
    let u = build_traffic_utility();
    let before = hash_of(world);
    let copy = world.clone();
    for _ in 0..3 {
        for v in world.active_vehicles() {
            let view = local_view(world, v.id).unwrap();
            for n in norms.applicable(&view) {
                accumulated_utility(world, &norms, &u, v.id, n.id).unwrap();
            }
        }
        resolve_unmatchable(world, &norms, &u).unwrap();
    }
    prop_assert_eq!(hash_of(world), before);
    prop_assert_eq!(world, &copy);
    Ok(())
}

fn with_slot(base: &LocalView, slot: usize, d: CellDescriptor) -> Precondition {
    let mut s = Precondition::ground(base).slots();
    s[slot] = SlotPattern::Exact(d);
    Precondition::from_slots(s)
}

/// Every single-slot generalisation of every ground precondition, with all
/// five siblings present, checked on the whole view space: the parent
/// matches exactly the union of its children.
pub fn generalisation_exhaustive() -> CheckResult {
    let views: Vec<LocalView> = LocalView::all().collect();
    prop_assert_eq!(views.len(), 125);
    for base in &views {
        for slot in 0..3 {
            let mut set = NormSet::new();
            let mut graph = NormGraph::new();
            let children: Vec<Precondition> = CellDescriptor::ALL.iter().map(|d| with_slot(base, slot, *d)).collect();
            let siblings: Vec<NormId> = children.iter().map(|p| set.add(*p, 0).id).collect();
            let parent = graph.generalize(&mut set, &siblings, 1).unwrap();
            let mut expected = Precondition::ground(base).slots();
            expected[slot] = SlotPattern::Wildcard;
            prop_assert_eq!(parent.precondition, Precondition::from_slots(expected));
            for v in &views {
                let any_child = children.iter().any(|c| matches(c, v));
                prop_assert_eq!(matches(&parent.precondition, v), any_child, "{:?} slot {} view {:?}", base, slot, v);
            }
            prop_assert!(siblings.iter().all(|id| !set.get(*id).unwrap().active));
            prop_assert_eq!(set.active_len(), 1);
        }
    }
    Ok(())
}

/// Generalising any pair of siblings: each child's matches are a subset of
/// the parent's, on all 125 views.
pub fn pairwise_generalisation() -> CheckResult {
    let views: Vec<LocalView> = LocalView::all().collect();
    let ds = CellDescriptor::ALL;
    for base in &views {
        for slot in 0..3 {
            for i in 0..ds.len() {
                for j in (i + 1)..ds.len() {
                    let mut set = NormSet::new();
                    let mut graph = NormGraph::new();
                    let (a, b) = (with_slot(base, slot, ds[i]), with_slot(base, slot, ds[j]));
                    let ids = [set.add(a, 0).id, set.add(b, 0).id];
                    let parent = graph.generalize(&mut set, &ids, 1).unwrap().precondition;
                    for v in &views {
                        if matches(&a, v) || matches(&b, v) {
                            prop_assert!(matches(&parent, v));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}
