//! Norm necessity and effectiveness over a sliding window, and periodic
//! refinement of the norm graph from those scores.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::ApplicationCounts;
use crate::norms::{NormGraph, NormId, NormSet, Precondition, SlotPattern};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("weight {0} must be positive, got {1}")]
    Weight(&'static str, f64),
    #[error("threshold {0} must lie in [0,1], got {1}")]
    Threshold(&'static str, f64),
    #[error("refinement interval must be at least 1 and no longer than the window ({interval} > {window})")]
    Interval { interval: u64, window: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub w_vc: f64,
    pub w_vnotc: f64,
    pub w_ac: f64,
    pub w_anotc: f64,
    pub necessity_threshold: f64,
    pub effectiveness_threshold: f64,
    /// Refinement interval T, in steps.
    pub interval: u64,
    /// Statistics window W, in steps.
    pub window: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            w_vc: 1.0,
            w_vnotc: 1.0,
            w_ac: 1.0,
            w_anotc: 1.0,
            necessity_threshold: 0.3,
            effectiveness_threshold: 0.3,
            interval: 50,
            window: 100,
        }
    }
}

impl EvaluationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, w) in [("w_vc", self.w_vc), ("w_vnotc", self.w_vnotc), ("w_ac", self.w_ac), ("w_anotc", self.w_anotc)] {
            if !(w > 0.0 && w.is_finite()) {
                return Err(ConfigError::Weight(name, w));
            }
        }
        for (name, t) in [
            ("necessity_threshold", self.necessity_threshold),
            ("effectiveness_threshold", self.effectiveness_threshold),
        ] {
            if !(0.0..=1.0).contains(&t) {
                return Err(ConfigError::Threshold(name, t));
            }
        }
        if self.interval < 1 || self.window < self.interval {
            return Err(ConfigError::Interval { interval: self.interval, window: self.window });
        }
        Ok(())
    }
}

/// Share of violations that led to a conflict, weighted. `None` when the
/// norm was never violated.
pub fn necessity(counts: &ApplicationCounts, config: &EvaluationConfig) -> Option<f64> {
    let harmful = counts.violated_conflict as f64 * config.w_vc;
    let harmless = counts.violated_no_conflict as f64 * config.w_vnotc;
    let denom = harmful + harmless;
    (denom > 0.0).then(|| harmful / denom)
}

/// Share of applications that avoided a conflict, weighted. `None` when the
/// norm was never applied.
pub fn effectiveness(counts: &ApplicationCounts, config: &EvaluationConfig) -> Option<f64> {
    let failed = counts.applied_conflict as f64 * config.w_ac;
    let succeeded = counts.applied_no_conflict as f64 * config.w_anotc;
    let denom = failed + succeeded;
    (denom > 0.0).then(|| succeeded / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub step: u64,
    pub necessity: Option<f64>,
    pub effectiveness: Option<f64>,
}

/// Windowed application counts and per-step score history for every norm.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormStats {
    counts: BTreeMap<NormId, VecDeque<(u64, ApplicationCounts)>>,
    scores: BTreeMap<NormId, VecDeque<Score>>,
}

impl NormStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, step: u64, counts: &BTreeMap<NormId, ApplicationCounts>) {
        for (id, c) in counts {
            let q = self.counts.entry(*id).or_default();
            match q.back_mut() {
                Some((s, acc)) if *s == step => acc.add(c),
                _ => q.push_back((step, *c)),
            }
        }
    }

    /// Counts summed over the `window` steps ending at `step`.
    pub fn window_counts(&self, id: NormId, step: u64, window: u64) -> ApplicationCounts {
        let from = (step + 1).saturating_sub(window);
        let mut total = ApplicationCounts::default();
        for (s, c) in self.counts.get(&id).into_iter().flatten() {
            if *s >= from && *s <= step {
                total.add(c);
            }
        }
        total
    }

    /// Scores every active norm at `step` and trims history to the window.
    pub fn evaluate(&mut self, norm_set: &NormSet, step: u64, config: &EvaluationConfig) {
        let from = (step + 1).saturating_sub(config.window);
        for q in self.counts.values_mut() {
            while q.front().is_some_and(|(s, _)| *s < from) {
                q.pop_front();
            }
        }
        self.counts.retain(|_, q| !q.is_empty());

        let active: BTreeSet<NormId> = norm_set.active().map(|n| n.id).collect();
        self.scores.retain(|id, _| active.contains(id));
        for id in active {
            let c = self.window_counts(id, step, config.window);
            let score = Score { step, necessity: necessity(&c, config), effectiveness: effectiveness(&c, config) };
            let h = self.scores.entry(id).or_default();
            if h.back().is_some_and(|s| s.step + 1 != step) {
                h.clear();
            }
            h.push_back(score);
            while h.len() as u64 > config.interval {
                h.pop_front();
            }
        }
    }

    pub fn latest(&self, id: NormId) -> Option<Score> {
        self.scores.get(&id).and_then(|h| h.back().copied())
    }

    fn history(&self, id: NormId) -> impl Iterator<Item = &Score> {
        self.scores.get(&id).into_iter().flatten()
    }

    fn forget(&mut self, id: NormId) {
        self.scores.remove(&id);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Standing {
    Good,
    Bad,
    Undecided,
}

fn standing(stats: &NormStats, id: NormId, step: u64, config: &EvaluationConfig) -> Standing {
    let history: Vec<&Score> = stats.history(id).collect();
    let full = history.len() as u64 == config.interval && history.last().is_some_and(|s| s.step == step);
    if !full {
        return Standing::Undecided;
    }
    let mut all_good = true;
    let mut all_bad = true;
    for s in history {
        let (Some(nnr), Some(ner)) = (s.necessity, s.effectiveness) else {
            return Standing::Undecided;
        };
        let good = nnr >= config.necessity_threshold && ner >= config.effectiveness_threshold;
        all_good &= good;
        all_bad &= !good;
    }
    match (all_good, all_bad) {
        (true, _) => Standing::Good,
        (_, true) => Standing::Bad,
        _ => Standing::Undecided,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generalisation {
    pub parent: NormId,
    pub children: Vec<NormId>,
    /// False when the parent was already active.
    pub parent_activated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Specialisation {
    pub norm: NormId,
    pub reactivated: Vec<NormId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub step: u64,
    pub generalised: Vec<Generalisation>,
    pub specialised: Vec<Specialisation>,
    pub deactivated: Vec<NormId>,
}

impl RefinementReport {
    pub fn is_empty(&self) -> bool {
        self.generalised.is_empty() && self.specialised.is_empty() && self.deactivated.is_empty()
    }
}

/// Runs every `config.interval` steps. Norms whose scores stayed above both
/// thresholds for the whole interval are merged with single-slot siblings;
/// norms that stayed below are specialised (if they have children) or
/// deactivated. Norms with any undefined score in the interval are left alone.
pub fn refine(
    norm_set: &mut NormSet,
    graph: &mut NormGraph,
    stats: &mut NormStats,
    config: &EvaluationConfig,
    current_step: u64,
) -> RefinementReport {
    let mut report = RefinementReport { step: current_step, ..Default::default() };
    if current_step == 0 || !current_step.is_multiple_of(config.interval) {
        return report;
    }
    let mut good = Vec::new();
    let mut bad = Vec::new();
    for n in norm_set.active() {
        match standing(stats, n.id, current_step, config) {
            Standing::Good => good.push((n.id, n.precondition)),
            Standing::Bad => bad.push(n.id),
            Standing::Undecided => {}
        }
    }

    let mut consumed: BTreeSet<NormId> = BTreeSet::new();
    for slot in 0..3 {
        let mut groups: BTreeMap<Precondition, Vec<NormId>> = BTreeMap::new();
        for (id, pre) in &good {
            if consumed.contains(id) || pre.slots()[slot] == SlotPattern::Wildcard {
                continue;
            }
            let mut key = pre.slots();
            key[slot] = SlotPattern::Wildcard;
            groups.entry(Precondition::from_slots(key)).or_default().push(*id);
        }
        for (_, members) in groups.into_iter().filter(|(_, m)| m.len() >= 2) {
            let was_active = |set: &NormSet, pre: &Precondition| set.find_active(pre).is_some();
            let mut parent_pre = norm_set.get(members[0]).expect("member exists").precondition.slots();
            parent_pre[slot] = SlotPattern::Wildcard;
            let already = was_active(norm_set, &Precondition::from_slots(parent_pre));
            let Ok(parent) = graph.generalize(norm_set, &members, current_step) else {
                continue;
            };
            stats.forget(parent.id);
            for m in &members {
                stats.forget(*m);
            }
            consumed.extend(members.iter().copied());
            report.generalised.push(Generalisation {
                parent: parent.id,
                children: members,
                parent_activated: !already,
            });
        }
    }

    for id in bad {
        if graph.has_children(id) {
            let Ok(children) = graph.specialize(norm_set, id) else {
                continue;
            };
            stats.forget(id);
            let reactivated: Vec<NormId> = children.iter().map(|n| n.id).collect();
            for c in &reactivated {
                stats.forget(*c);
            }
            report.specialised.push(Specialisation { norm: id, reactivated });
        } else if norm_set.set_active(id, false).is_ok() {
            stats.forget(id);
            report.deactivated.push(id);
        }
    }
    report
}
