//! Norms as (precondition over a local view, prohibited action) pairs, the
//! run's norm set, and the parent/child graph used by refinement.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{CellDescriptor, LocalView};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NormError {
    #[error("unknown norm {0}")]
    UnknownNorm(NormId),
    #[error("norm {0} is not active")]
    Inactive(NormId),
    #[error("norms cannot be generalised: {0}")]
    NotGeneralisable(String),
    #[error("cannot parse norm text {0:?}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NormId(pub u32);

impl fmt::Display for NormId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SlotPattern {
    Exact(CellDescriptor),
    Wildcard,
}

impl SlotPattern {
    pub fn matches(self, d: CellDescriptor) -> bool {
        match self {
            SlotPattern::Wildcard => true,
            SlotPattern::Exact(e) => e == d,
        }
    }

    fn symbol(self) -> char {
        match self {
            SlotPattern::Wildcard => '*',
            SlotPattern::Exact(d) => d.symbol(),
        }
    }

    fn from_symbol(c: char) -> Option<Self> {
        if c == '*' {
            Some(SlotPattern::Wildcard)
        } else {
            CellDescriptor::from_symbol(c).map(SlotPattern::Exact)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Precondition {
    pub left: SlotPattern,
    pub front: SlotPattern,
    pub right: SlotPattern,
}

impl Precondition {
    pub const fn new(left: SlotPattern, front: SlotPattern, right: SlotPattern) -> Self {
        Self { left, front, right }
    }

    /// The pattern matching exactly `view`.
    pub fn ground(view: &LocalView) -> Self {
        Self {
            left: SlotPattern::Exact(view.left),
            front: SlotPattern::Exact(view.front),
            right: SlotPattern::Exact(view.right),
        }
    }

    pub fn slots(&self) -> [SlotPattern; 3] {
        [self.left, self.front, self.right]
    }

    pub fn from_slots([left, front, right]: [SlotPattern; 3]) -> Self {
        Self { left, front, right }
    }

    pub fn is_ground(&self) -> bool {
        self.slots().iter().all(|s| *s != SlotPattern::Wildcard)
    }

    pub fn wildcard_count(&self) -> usize {
        self.slots().iter().filter(|s| **s == SlotPattern::Wildcard).count()
    }

    /// True when every view matched by `other` is also matched by `self`.
    pub fn generalises(&self, other: &Precondition) -> bool {
        self.slots().iter().zip(other.slots()).all(|(a, b)| *a == SlotPattern::Wildcard || *a == b)
    }
}

pub fn matches(precondition: &Precondition, view: &LocalView) -> bool {
    precondition.slots().iter().zip(view.slots()).all(|(p, d)| p.matches(d))
}

impl fmt::Display for Precondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "if(left({}),front({}),right({}))",
            self.left.symbol(),
            self.front.symbol(),
            self.right.symbol()
        )
    }
}

impl FromStr for Precondition {
    type Err = NormError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || NormError::Parse(s.to_string());
        let body = s.trim().strip_prefix("if(").and_then(|r| r.strip_suffix(')')).ok_or_else(err)?;
        let mut slots = [SlotPattern::Wildcard; 3];
        let parts: Vec<&str> = body.split(',').collect();
        if parts.len() != 3 {
            return Err(err());
        }
        for ((slot, part), name) in slots.iter_mut().zip(parts).zip(["left", "front", "right"]) {
            let inner = part
                .strip_prefix(name)
                .and_then(|r| r.strip_prefix('('))
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(err)?;
            let mut chars = inner.chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(err());
            };
            *slot = SlotPattern::from_symbol(c).ok_or_else(err)?;
        }
        Ok(Precondition::from_slots(slots))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Deontic {
    Prohibition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Go,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Norm {
    pub id: NormId,
    pub precondition: Precondition,
    pub deontic: Deontic,
    pub action: Action,
    pub active: bool,
    pub created_step: u64,
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> proh(Go)", self.precondition)
    }
}

/// Parses the `if(...) -> proh(Go)` form back into a precondition.
pub fn parse_norm_text(s: &str) -> Result<Precondition, NormError> {
    let (pre, action) = s.split_once("->").ok_or_else(|| NormError::Parse(s.to_string()))?;
    if action.trim() != "proh(Go)" {
        return Err(NormError::Parse(s.to_string()));
    }
    pre.parse()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct NormSet {
    norms: BTreeMap<NormId, Norm>,
    next_id: u32,
}

impl NormSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: NormId) -> Option<&Norm> {
        self.norms.get(&id)
    }

    /// Every norm ever created, active or not, in id order.
    pub fn iter(&self) -> impl Iterator<Item = &Norm> {
        self.norms.values()
    }

    pub fn active(&self) -> impl Iterator<Item = &Norm> {
        self.norms.values().filter(|n| n.active)
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn active_len(&self) -> usize {
        self.active().count()
    }

    pub fn applicable(&self, view: &LocalView) -> Vec<&Norm> {
        self.active().filter(|n| matches(&n.precondition, view)).collect()
    }

    pub fn has_applicable(&self, view: &LocalView) -> bool {
        self.active().any(|n| matches(&n.precondition, view))
    }

    pub fn find_active(&self, precondition: &Precondition) -> Option<&Norm> {
        self.active().find(|n| n.precondition == *precondition)
    }

    /// Adds a prohibition of Go under `precondition`, or returns the active
    /// norm that already has it.
    pub fn add(&mut self, precondition: Precondition, step: u64) -> &Norm {
        let id = match self.find_active(&precondition) {
            Some(n) => n.id,
            None => self.create(precondition, step),
        };
        &self.norms[&id]
    }

    fn create(&mut self, precondition: Precondition, step: u64) -> NormId {
        let id = NormId(self.next_id);
        self.next_id += 1;
        self.norms.insert(
            id,
            Norm {
                id,
                precondition,
                deontic: Deontic::Prohibition,
                action: Action::Go,
                active: true,
                created_step: step,
            },
        );
        id
    }

    pub fn set_active(&mut self, id: NormId, active: bool) -> Result<(), NormError> {
        self.norms.get_mut(&id).ok_or(NormError::UnknownNorm(id))?.active = active;
        Ok(())
    }
}

pub fn applicable_norms<'a>(norm_set: &'a NormSet, view: &LocalView) -> Vec<&'a Norm> {
    norm_set.applicable(view)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NormGraph {
    edges: BTreeMap<NormId, BTreeSet<NormId>>,
}

impl NormGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn children(&self, parent: NormId) -> impl Iterator<Item = NormId> + '_ {
        self.edges.get(&parent).into_iter().flatten().copied()
    }

    pub fn has_children(&self, parent: NormId) -> bool {
        self.edges.get(&parent).is_some_and(|c| !c.is_empty())
    }

    pub fn edges(&self) -> impl Iterator<Item = (NormId, NormId)> + '_ {
        self.edges.iter().flat_map(|(p, cs)| cs.iter().map(move |c| (*p, *c)))
    }

    fn link(&mut self, parent: NormId, child: NormId) {
        self.edges.entry(parent).or_default().insert(child);
    }

    /// Replaces active norms that differ in exactly one slot with a parent
    /// holding a wildcard there. The parent is reused if a norm with that
    /// precondition already exists.
    pub fn generalize(
        &mut self,
        norm_set: &mut NormSet,
        norm_ids: &[NormId],
        step: u64,
    ) -> Result<Norm, NormError> {
        let mut norms = Vec::with_capacity(norm_ids.len());
        for id in norm_ids {
            let n = norm_set.get(*id).ok_or(NormError::UnknownNorm(*id))?;
            if !n.active {
                return Err(NormError::Inactive(*id));
            }
            norms.push(n.clone());
        }
        if norms.len() < 2 {
            return Err(NormError::NotGeneralisable("need at least two norms".into()));
        }
        let first = norms[0].precondition.slots();
        let differing: Vec<usize> = (0..3)
            .filter(|&s| norms.iter().any(|n| n.precondition.slots()[s] != first[s]))
            .collect();
        let slot = match differing.as_slice() {
            [s] => *s,
            _ => {
                return Err(NormError::NotGeneralisable(format!(
                    "preconditions differ in {} slots, expected exactly one",
                    differing.len()
                )))
            }
        };
        if norms.iter().any(|n| n.precondition.slots()[slot] == SlotPattern::Wildcard) {
            return Err(NormError::NotGeneralisable("differing slot is already a wildcard".into()));
        }
        let mut slots = first;
        slots[slot] = SlotPattern::Wildcard;
        let parent_pre = Precondition::from_slots(slots);

        let active_parent = norm_set.find_active(&parent_pre).map(|n| n.id);
        let dormant_parent = norm_set.iter().find(|n| n.precondition == parent_pre).map(|n| n.id);
        let parent_id = match (active_parent, dormant_parent) {
            (Some(id), _) => id,
            (None, Some(id)) => {
                norm_set.set_active(id, true)?;
                id
            }
            (None, None) => norm_set.create(parent_pre, step),
        };
        for n in &norms {
            self.link(parent_id, n.id);
            norm_set.set_active(n.id, false)?;
        }
        Ok(norm_set.norms[&parent_id].clone())
    }

    /// Deactivates a norm and reactivates its children. An empty result means
    /// plain deactivation.
    pub fn specialize(&mut self, norm_set: &mut NormSet, norm_id: NormId) -> Result<Vec<Norm>, NormError> {
        let norm = norm_set.get(norm_id).ok_or(NormError::UnknownNorm(norm_id))?;
        if !norm.active {
            return Err(NormError::Inactive(norm_id));
        }
        norm_set.set_active(norm_id, false)?;
        let mut reactivated = Vec::new();
        let children: Vec<NormId> = self.children(norm_id).collect();
        for child in children {
            let pre = norm_set.get(child).ok_or(NormError::UnknownNorm(child))?.precondition;
            if norm_set.find_active(&pre).is_some() {
                continue;
            }
            norm_set.set_active(child, true)?;
            reactivated.push(norm_set.norms[&child].clone());
        }
        Ok(reactivated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use CellDescriptor::*;
    use SlotPattern::{Exact as E, Wildcard as W};

    fn pre(l: SlotPattern, f: SlotPattern, r: SlotPattern) -> Precondition {
        Precondition::new(l, f, r)
    }

    #[test]
    fn right_crossing_pattern_matches() {
        let p = pre(E(Empty), E(Empty), E(HeadingFromRight));
        assert!(matches(&p, &LocalView::new(Empty, Empty, HeadingFromRight)));
        assert!(!matches(&p, &LocalView::new(Empty, SameHeading, HeadingFromRight)));
    }

    #[test]
    fn wildcards_match_everything() {
        let p = pre(W, W, W);
        assert!(LocalView::all().all(|v| matches(&p, &v)));
        assert_eq!(LocalView::all().count(), 125);
    }

    #[test]
    fn text_form_round_trips() {
        let p = pre(W, E(Empty), E(HeadingFromLeft));
        let mut set = NormSet::new();
        let n = set.add(p, 0).clone();
        assert_eq!(n.to_string(), "if(left(*),front(-),right(<)) -> proh(Go)");
        assert_eq!(parse_norm_text(&n.to_string()).unwrap(), p);
        assert!(parse_norm_text("if(left(x),front(-),right(<)) -> proh(Go)").is_err());
        assert!(parse_norm_text("if(left(-),front(-),right(<)) -> obl(Go)").is_err());
    }

    #[test]
    fn applicable_in_id_order_and_skips_inactive() {
        let mut set = NormSet::new();
        assert!(set.applicable(&LocalView::EMPTY).is_empty());
        let na = set.add(pre(E(Empty), E(Empty), E(HeadingFromRight)), 0).id;
        let nb = set.add(pre(E(HeadingFromLeft), E(Empty), E(Empty)), 0).id;
        let nw = set.add(pre(W, E(Empty), W), 0).id;
        let view = LocalView::new(HeadingFromLeft, Empty, Empty);
        let ids: Vec<_> = set.applicable(&view).iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![nb, nw]);
        set.set_active(nb, false).unwrap();
        let ids: Vec<_> = set.applicable(&view).iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![nw]);
        assert!(set.get(na).unwrap().active);
    }

    #[test]
    fn add_is_idempotent() {
        let mut set = NormSet::new();
        let p = pre(E(Empty), E(Empty), E(HeadingFromRight));
        let first = set.add(p, 3).id;
        assert_eq!(set.len(), 1);
        let second = set.add(p, 9).id;
        assert_eq!(first, second);
        assert_eq!(set.len(), 1);
        assert_eq!(set.get(first).unwrap().created_step, 3);
    }

    #[test]
    fn generalize_single_slot() {
        let mut set = NormSet::new();
        let mut graph = NormGraph::new();
        let a = set.add(pre(E(Empty), E(Empty), E(HeadingFromRight)), 0).id;
        let b = set.add(pre(E(HeadingFromLeft), E(Empty), E(HeadingFromRight)), 0).id;
        let parent = graph.generalize(&mut set, &[a, b], 5).unwrap();
        assert_eq!(parent.precondition, pre(W, E(Empty), E(HeadingFromRight)));
        assert!(parent.active);
        assert!(!set.get(a).unwrap().active && !set.get(b).unwrap().active);
        assert_eq!(graph.children(parent.id).collect::<Vec<_>>(), vec![a, b]);
    }

    #[test]
    fn generalize_rejects_bad_inputs() {
        let mut set = NormSet::new();
        let mut graph = NormGraph::new();
        let a = set.add(pre(E(Empty), E(Empty), E(HeadingFromRight)), 0).id;
        let c = set.add(pre(E(HeadingFromLeft), E(SameHeading), E(HeadingFromRight)), 0).id;
        assert!(matches!(graph.generalize(&mut set, &[a, c], 0), Err(NormError::NotGeneralisable(_))));
        assert!(matches!(graph.generalize(&mut set, &[a, a], 0), Err(NormError::NotGeneralisable(_))));
        assert!(matches!(graph.generalize(&mut set, &[a], 0), Err(NormError::NotGeneralisable(_))));
        assert_eq!(graph.generalize(&mut set, &[a, NormId(77)], 0), Err(NormError::UnknownNorm(NormId(77))));
        assert!(set.get(a).unwrap().active && set.get(c).unwrap().active);
    }

    #[test]
    fn two_level_generalisation() {
        let mut set = NormSet::new();
        let mut graph = NormGraph::new();
        let a = set.add(pre(E(Empty), E(Empty), E(HeadingFromRight)), 0).id;
        let b = set.add(pre(E(HeadingFromLeft), E(Empty), E(HeadingFromRight)), 0).id;
        let c = set.add(pre(W, E(SameHeading), E(HeadingFromRight)), 0).id;
        let p = graph.generalize(&mut set, &[a, b], 0).unwrap();
        let gp = graph.generalize(&mut set, &[p.id, c], 0).unwrap();
        assert_eq!(gp.precondition, pre(W, W, E(HeadingFromRight)));
        assert_eq!(gp.precondition.wildcard_count(), 2);
        assert_eq!(set.active_len(), 1);
    }

    #[test]
    fn specialize_parent_and_leaf() {
        let mut set = NormSet::new();
        let mut graph = NormGraph::new();
        let a = set.add(pre(E(Empty), E(Empty), E(HeadingFromRight)), 0).id;
        let b = set.add(pre(E(HeadingFromLeft), E(Empty), E(HeadingFromRight)), 0).id;
        let p = graph.generalize(&mut set, &[a, b], 0).unwrap();
        let back = graph.specialize(&mut set, p.id).unwrap();
        assert_eq!(back.iter().map(|n| n.id).collect::<Vec<_>>(), vec![a, b]);
        assert!(!set.get(p.id).unwrap().active);
        assert!(set.get(a).unwrap().active && set.get(b).unwrap().active);

        assert!(graph.specialize(&mut set, a).unwrap().is_empty());
        assert!(!set.get(a).unwrap().active);
        assert_eq!(graph.specialize(&mut set, a), Err(NormError::Inactive(a)));
        assert_eq!(graph.specialize(&mut set, NormId(42)), Err(NormError::UnknownNorm(NormId(42))));
    }

    #[test]
    fn regeneralising_reuses_parent() {
        let mut set = NormSet::new();
        let mut graph = NormGraph::new();
        let a = set.add(pre(E(Empty), E(Empty), E(HeadingFromRight)), 0).id;
        let b = set.add(pre(E(HeadingFromLeft), E(Empty), E(HeadingFromRight)), 0).id;
        let p = graph.generalize(&mut set, &[a, b], 0).unwrap();
        graph.specialize(&mut set, p.id).unwrap();
        let again = graph.generalize(&mut set, &[a, b], 10).unwrap();
        assert_eq!(again.id, p.id);
        assert_eq!(again.precondition, p.precondition);
        assert_eq!(set.len(), 3);
    }

    #[test]
    fn generalises_relation() {
        let parent = pre(W, E(Empty), E(HeadingFromRight));
        let child = pre(E(HeadingFromLeft), E(Empty), E(HeadingFromRight));
        assert!(parent.generalises(&child));
        assert!(!child.generalises(&parent));
        assert!(child.is_ground() && !parent.is_ground());
    }
}
