//! Sequential and parallel composition of diagrams.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::HierarchyError;
use crate::diagram::{Arc, CanonicalDiagram, Distribution, StateNode, TimePartition};
use crate::ids::{ArcId, StateId, Tick};
use crate::scalar::Scalar;

/// Chains `d1` and `d2` into a linear fragment: `d1`'s final state is glued to
/// `d2`'s initial state and `d2`'s timeline is shifted by `α1`.
///
/// Requires `α1 < α2` and equal populations. The glued state keeps `d1`'s id.
pub fn compose_sequential<T: Scalar>(
    d1: &CanonicalDiagram<T>,
    d2: &CanonicalDiagram<T>,
) -> Result<CanonicalDiagram<T>, HierarchyError> {
    let (a1, a2) = (d1.horizon(), d2.horizon());
    if a1 >= a2 {
        return Err(HierarchyError::PreconditionViolated(format!(
            "sequential composition needs α1 < α2, got {a1} and {a2}"
        )));
    }
    if d1.population != d2.population {
        return Err(HierarchyError::PreconditionViolated(format!(
            "populations differ ({} vs {})",
            d1.population, d2.population
        )));
    }
    let glued = d1.final_state.clone();
    let rename = |s: &StateId| if s == &d2.initial { glued.clone() } else { s.clone() };

    let d1_states: BTreeSet<&StateId> = d1.states.iter().map(|s| &s.id).collect();
    for s in &d2.states {
        if s.id != d2.initial && d1_states.contains(&s.id) {
            return Err(HierarchyError::IdCollision(s.id.to_string()));
        }
    }
    let d1_arcs: BTreeSet<&ArcId> = d1.arcs.iter().map(|a| &a.id).collect();
    for a in &d2.arcs {
        if d1_arcs.contains(&a.id) {
            return Err(HierarchyError::IdCollision(a.id.to_string()));
        }
    }

    let top_rank = d1.states.iter().map(|s| s.rank).max().unwrap_or(0);
    let glued_rank = d1.rank(&glued).unwrap_or(top_rank);
    let d2_base = d2.rank(&d2.initial).unwrap_or(0);
    let glued_level = d1.state(&glued).map_or(0, |s| s.level);
    let level_shift = d1.partition.interval_count() as u32;

    let mut states = d1.states.clone();
    for s in &d2.states {
        if s.id == d2.initial {
            if let (Some(limit), Some(g)) = (s.dwell_limit, states.iter_mut().find(|x| x.id == glued)) {
                g.dwell_limit = Some(limit);
            }
            continue;
        }
        let shifted = s.rank.saturating_sub(d2_base);
        states.push(StateNode {
            id: s.id.clone(),
            rank: top_rank.max(glued_rank) + shifted,
            level: (s.level + level_shift).max(glued_level),
            dwell_limit: s.dwell_limit,
        });
    }

    let mut arcs = d1.arcs.clone();
    arcs.extend(d2.arcs.iter().map(|a| Arc {
        id: a.id.clone(),
        source: rename(&a.source),
        target: rename(&a.target),
        kind: a.kind,
        theta: a.theta,
    }));

    let mut boundaries = d1.partition.boundaries.clone();
    boundaries.extend(d2.partition.boundaries.iter().skip(1).map(|t| t + a1));

    let mut mu: Vec<Distribution<T>> = d1.mu.iter().take(d1.mu.len().saturating_sub(1)).cloned().collect();
    mu.extend(d2.mu.iter().map(|m| m.rekey(&d2.initial, &glued)));

    Ok(CanonicalDiagram {
        id: format!("{}+{}", d1.id, d2.id).into(),
        partition: TimePartition { boundaries },
        states,
        arcs,
        initial: d1.initial.clone(),
        final_state: rename(&d2.final_state),
        mu,
        population: d1.population,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositeState {
    pub id: StateId,
    pub components: (StateId, StateId),
    pub ranks: (u32, u32),
}

impl CompositeState {
    /// Componentwise order.
    pub fn precedes(&self, other: &CompositeState) -> bool {
        self.ranks.0 <= other.ranks.0 && self.ranks.1 <= other.ranks.1
    }
}

/// One component moves along its arc while the other stays put.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositeArc {
    pub id: ArcId,
    pub source: StateId,
    pub target: StateId,
    pub component: usize,
    pub arc: ArcId,
}

/// Pair-state view of two diagrams running on a shared clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeDiagram<T> {
    pub partition: TimePartition,
    pub states: Vec<CompositeState>,
    pub arcs: Vec<CompositeArc>,
    pub initial: StateId,
    pub final_state: StateId,
    /// Product distributions at the boundaries both components share.
    pub mu: BTreeMap<Tick, Distribution<T>>,
}

pub fn pair_id(a: &StateId, b: &StateId) -> StateId {
    StateId(format!("({a},{b})"))
}

pub fn compose_parallel<T: Scalar>(
    d1: &CanonicalDiagram<T>,
    d2: &CanonicalDiagram<T>,
) -> Result<CompositeDiagram<T>, HierarchyError> {
    if d1.horizon() != d2.horizon() {
        return Err(HierarchyError::PreconditionViolated(format!(
            "parallel composition needs α1 = α2, got {} and {}",
            d1.horizon(),
            d2.horizon()
        )));
    }
    let merged: BTreeSet<Tick> = d1.partition.boundaries.iter().chain(&d2.partition.boundaries).copied().collect();
    let partition = TimePartition { boundaries: merged.into_iter().collect() };

    let o1 = d1.ordered_states();
    let o2 = d2.ordered_states();
    let mut states = Vec::with_capacity(o1.len() * o2.len());
    for s1 in &o1 {
        for s2 in &o2 {
            states.push(CompositeState {
                id: pair_id(&s1.id, &s2.id),
                components: (s1.id.clone(), s2.id.clone()),
                ranks: (s1.rank, s2.rank),
            });
        }
    }

    let mut arcs = Vec::new();
    for a in &d1.arcs {
        for s2 in &o2 {
            arcs.push(CompositeArc {
                id: ArcId(format!("{}|{}", a.id, s2.id)),
                source: pair_id(&a.source, &s2.id),
                target: pair_id(&a.target, &s2.id),
                component: 0,
                arc: a.id.clone(),
            });
        }
    }
    for a in &d2.arcs {
        for s1 in &o1 {
            arcs.push(CompositeArc {
                id: ArcId(format!("{}|{}", s1.id, a.id)),
                source: pair_id(&s1.id, &a.source),
                target: pair_id(&s1.id, &a.target),
                component: 1,
                arc: a.id.clone(),
            });
        }
    }

    let mut mu = BTreeMap::new();
    for (i, t) in d1.partition.boundaries.iter().enumerate() {
        let Some(j) = d2.partition.boundaries.iter().position(|x| x == t) else { continue };
        let (Some(m1), Some(m2)) = (d1.mu.get(i), d2.mu.get(j)) else { continue };
        let mut product = BTreeMap::new();
        for (s1, &p1) in m1.iter() {
            for (s2, &p2) in m2.iter() {
                let p = p1 * p2;
                if !p.is_zero() {
                    product.insert(pair_id(s1, s2), p);
                }
            }
        }
        mu.insert(*t, Distribution(product));
    }

    Ok(CompositeDiagram {
        partition,
        states,
        arcs,
        initial: pair_id(&d1.initial, &d2.initial),
        final_state: pair_id(&d1.final_state, &d2.final_state),
        mu,
    })
}
