//! Case-based norm creation from conflicts.
//!
//! Both strategies turn a responsible vehicle's pre-collision view into a
//! ground precondition prohibiting Go, unless an active norm already covers
//! that view. The fair strategy does this for every responsible vehicle; the
//! baseline picks one of them at random.

use rand::Rng;

use crate::detection::Conflict;
use crate::gridworld::LocalView;
use crate::norms::{Norm, NormSet, Precondition};

fn cover(norm_set: &mut NormSet, context: &LocalView, step: u64, created: &mut Vec<Norm>) {
    if norm_set.has_applicable(context) {
        return;
    }
    created.push(norm_set.add(Precondition::ground(context), step).clone());
}

/// Creates a norm for every responsible vehicle whose context is uncovered.
pub fn synthesize_uns(conflicts: &[Conflict], norm_set: &mut NormSet) -> Vec<Norm> {
    let mut created = Vec::new();
    for conflict in conflicts {
        for r in &conflict.responsible {
            cover(norm_set, &r.context, conflict.time_step, &mut created);
        }
    }
    created
}

/// Creates at most one norm per conflict, from a uniformly drawn responsible
/// vehicle. One draw is consumed per non-empty conflict even when the drawn
/// context is already covered.
pub fn synthesize_iron<R: Rng + ?Sized>(conflicts: &[Conflict], norm_set: &mut NormSet, rng: &mut R) -> Vec<Norm> {
    let mut created = Vec::new();
    for conflict in conflicts {
        if conflict.responsible.is_empty() {
            continue;
        }
        let pick = &conflict.responsible[rng.gen_range(0..conflict.responsible.len())];
        cover(norm_set, &pick.context, conflict.time_step, &mut created);
    }
    created
}
