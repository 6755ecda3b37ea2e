//! Canonical state diagrams: the time partition, ordered states, arcs, and the
//! prescribed distributions at every boundary.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ArcId, DiagramId, StateId, Tick};
use crate::report::ValidationReport;
use crate::scalar::{apportion, Scalar};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PartitionError {
    #[error("partition must start at tick 0")]
    NonZeroOrigin,
    #[error("partition needs at least two boundaries")]
    TooShort,
    #[error("partition boundaries must be strictly increasing (at index {0})")]
    NotIncreasing(usize),
}

/// Boundaries `τ0 = 0 < τ1 < … < τn`; interval `j` (1-based) is `(τ(j-1), τj]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimePartition {
    pub boundaries: Vec<Tick>,
}

impl TimePartition {
    pub fn new(boundaries: Vec<Tick>) -> Result<Self, PartitionError> {
        let p = Self { boundaries };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<(), PartitionError> {
        if self.boundaries.len() < 2 {
            return Err(PartitionError::TooShort);
        }
        if self.boundaries[0] != 0 {
            return Err(PartitionError::NonZeroOrigin);
        }
        for i in 1..self.boundaries.len() {
            if self.boundaries[i] <= self.boundaries[i - 1] {
                return Err(PartitionError::NotIncreasing(i));
            }
        }
        Ok(())
    }

    /// `α = τn`.
    pub fn horizon(&self) -> Tick {
        self.boundaries.last().copied().unwrap_or(0)
    }

    /// Number of intervals `n`.
    pub fn interval_count(&self) -> usize {
        self.boundaries.len().saturating_sub(1)
    }

    /// The 1-based interval containing `tick`. Tick 0 belongs to the first
    /// interval; ticks past the horizon fall into an overflow bucket `n + 1`.
    pub fn interval_of(&self, tick: Tick) -> usize {
        for j in 1..self.boundaries.len() {
            if tick <= self.boundaries[j] {
                return j;
            }
        }
        self.boundaries.len()
    }

    pub fn intervals(&self) -> impl Iterator<Item = (Tick, Tick)> + '_ {
        self.boundaries.windows(2).map(|w| (w[0], w[1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateRole {
    Initial,
    Intermediate,
    Final,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateNode {
    pub id: StateId,
    /// Position in the total order given by the classification rule.
    pub rank: u32,
    /// Index `j` of the boundary group the state belongs to (0 for the initial group).
    pub level: u32,
    /// Objects resting this long without a pending transition take a backstep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dwell_limit: Option<Tick>,
}

impl StateNode {
    pub fn new(id: impl Into<StateId>, rank: u32, level: u32) -> Self {
        Self { id: id.into(), rank, level, dwell_limit: None }
    }

    pub fn with_dwell(mut self, limit: Tick) -> Self {
        self.dwell_limit = Some(limit);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArcKind {
    Forward,
    Backstep,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Arc {
    pub id: ArcId,
    pub source: StateId,
    pub target: StateId,
    pub kind: ArcKind,
    /// Transit time θ; zero for backsteps.
    pub theta: Tick,
}

impl Arc {
    pub fn forward(id: impl Into<ArcId>, source: impl Into<StateId>, target: impl Into<StateId>, theta: Tick) -> Self {
        Self { id: id.into(), source: source.into(), target: target.into(), kind: ArcKind::Forward, theta }
    }

    pub fn backstep(id: impl Into<ArcId>, source: impl Into<StateId>, target: impl Into<StateId>) -> Self {
        Self { id: id.into(), source: source.into(), target: target.into(), kind: ArcKind::Backstep, theta: 0 }
    }

    pub fn is_forward(&self) -> bool {
        self.kind == ArcKind::Forward
    }
}

/// Fractions of the population per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Distribution<T>(pub BTreeMap<StateId, T>);

impl<T> Default for Distribution<T> {
    fn default() -> Self {
        Self(BTreeMap::new())
    }
}

impl<T: Scalar> Distribution<T> {
    pub fn point(state: impl Into<StateId>) -> Self {
        let mut m = BTreeMap::new();
        m.insert(state.into(), T::one());
        Self(m)
    }

    pub fn from_pairs<S: Into<StateId>>(pairs: impl IntoIterator<Item = (S, T)>) -> Self {
        Self(pairs.into_iter().map(|(s, v)| (s.into(), v)).collect())
    }

    pub fn get(&self, state: &StateId) -> T {
        self.0.get(state).copied().unwrap_or_else(T::zero)
    }

    pub fn total(&self) -> T {
        self.0.values().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn is_normalized(&self) -> bool {
        (self.total() - T::one()).abs() <= T::normalization_tolerance()
    }

    /// Renames one state key, used when diagrams are glued together.
    pub fn rekey(&self, from: &StateId, to: &StateId) -> Self {
        Self(self.0.iter().map(|(k, &v)| (if k == from { to.clone() } else { k.clone() }, v)).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateId, &T)> {
        self.0.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalDiagram<T> {
    pub id: DiagramId,
    pub partition: TimePartition,
    pub states: Vec<StateNode>,
    pub arcs: Vec<Arc>,
    pub initial: StateId,
    pub final_state: StateId,
    /// `μ0 … μn`, one per partition boundary.
    pub mu: Vec<Distribution<T>>,
    pub population: u64,
}

impl<T: Scalar> CanonicalDiagram<T> {
    pub fn state(&self, id: &StateId) -> Option<&StateNode> {
        self.states.iter().find(|s| &s.id == id)
    }

    pub fn has_state(&self, id: &StateId) -> bool {
        self.state(id).is_some()
    }

    pub fn arc(&self, id: &ArcId) -> Option<&Arc> {
        self.arcs.iter().find(|a| &a.id == id)
    }

    pub fn rank(&self, id: &StateId) -> Option<u32> {
        self.state(id).map(|s| s.rank)
    }

    pub fn horizon(&self) -> Tick {
        self.partition.horizon()
    }

    /// States sorted by rank.
    pub fn ordered_states(&self) -> Vec<&StateNode> {
        let mut v: Vec<_> = self.states.iter().collect();
        v.sort_by(|a, b| a.rank.cmp(&b.rank).then_with(|| a.id.cmp(&b.id)));
        v
    }

    /// 0-based position of a state in rank order.
    pub fn position(&self, id: &StateId) -> Option<usize> {
        self.ordered_states().iter().position(|s| &s.id == id)
    }

    pub fn role(&self, id: &StateId) -> StateRole {
        if id == &self.initial {
            StateRole::Initial
        } else if id == &self.final_state {
            StateRole::Final
        } else {
            StateRole::Intermediate
        }
    }

    pub fn forward_arcs(&self) -> impl Iterator<Item = &Arc> {
        self.arcs.iter().filter(|a| a.kind == ArcKind::Forward)
    }

    pub fn backstep_arcs(&self) -> impl Iterator<Item = &Arc> {
        self.arcs.iter().filter(|a| a.kind == ArcKind::Backstep)
    }

    /// Initial object counts per state, apportioned from `μ0`.
    pub fn initial_counts(&self) -> BTreeMap<StateId, u64> {
        let ordered = self.ordered_states();
        let mu0 = self.mu.first().cloned().unwrap_or_else(|| Distribution::point(self.initial.clone()));
        let fractions: Vec<T> = ordered.iter().map(|s| mu0.get(&s.id)).collect();
        let counts = if fractions.iter().all(|f| f.is_zero()) {
            ordered.iter().map(|s| if s.id == self.initial { self.population } else { 0 }).collect()
        } else {
            apportion(&fractions, self.population)
        };
        ordered.iter().map(|s| s.id.clone()).zip(counts).collect()
    }

    /// States reachable from the initial state along forward arcs.
    pub fn forward_reachable(&self) -> BTreeSet<StateId> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        if self.has_state(&self.initial) {
            seen.insert(self.initial.clone());
            queue.push_back(self.initial.clone());
        }
        while let Some(s) = queue.pop_front() {
            for a in self.forward_arcs().filter(|a| a.source == s) {
                if self.has_state(&a.target) && seen.insert(a.target.clone()) {
                    queue.push_back(a.target.clone());
                }
            }
        }
        seen
    }
}

/// Checks every structural invariant of a canonical diagram. Pure: the same
/// input always yields the same report.
pub fn validate_canonical<T: Scalar>(d: &CanonicalDiagram<T>) -> ValidationReport {
    let mut r = ValidationReport::new();
    let did = d.id.to_string();

    if let Err(e) = d.partition.check() {
        r.error("partition", format!("invalid partition: {e}"), [did.clone()]);
    }
    if d.population == 0 {
        r.error("population", "population must be positive", [did.clone()]);
    }

    let mut seen_ids = BTreeSet::new();
    let mut seen_ranks: BTreeMap<u32, &StateId> = BTreeMap::new();
    let n_intervals = d.partition.interval_count() as u32;
    for s in &d.states {
        if !seen_ids.insert(&s.id) {
            r.error("duplicate-state", "duplicate state id", [s.id.to_string()]);
        }
        if let Some(other) = seen_ranks.insert(s.rank, &s.id) {
            if other != &s.id {
                r.error("duplicate-rank", "ranks must be unique", [other.to_string(), s.id.to_string()]);
            }
        }
        if s.level > n_intervals {
            r.error("level", "state level outside partition", [s.id.to_string()]);
        }
        if s.dwell_limit == Some(0) {
            r.error("dwell", "dwell limit must be positive", [s.id.to_string()]);
        }
    }
    for a in &d.states {
        for b in &d.states {
            if a.level < b.level && a.rank > b.rank {
                r.error("level-order", "ranks do not respect interval grouping", [a.id.to_string(), b.id.to_string()]);
            }
        }
    }

    if !d.has_state(&d.initial) {
        r.error("initial", "initial state is not declared", [d.initial.to_string()]);
    }
    if !d.has_state(&d.final_state) {
        r.error("final", "final state is not declared", [d.final_state.to_string()]);
    }

    let mut arc_ids = BTreeSet::new();
    for a in &d.arcs {
        if !arc_ids.insert(&a.id) {
            r.error("duplicate-arc", "duplicate arc id", [a.id.to_string()]);
        }
        let (Some(rs), Some(rt)) = (d.rank(&a.source), d.rank(&a.target)) else {
            r.error("unknown-state", "arc references unknown state", [a.id.to_string()]);
            continue;
        };
        match a.kind {
            ArcKind::Forward => {
                if rs >= rt {
                    r.error("forward-order", "forward arc violates order", [a.id.to_string()]);
                }
                if a.theta == 0 {
                    r.error("theta", "forward arc needs positive transit time", [a.id.to_string()]);
                }
                if a.source == d.final_state {
                    r.error("final-outgoing", "final state has outgoing forward arc", [a.id.to_string()]);
                }
            }
            ArcKind::Backstep => {
                if rt > rs {
                    r.error("backstep-order", "backstep arc violates order", [a.id.to_string()]);
                }
                if a.theta != 0 {
                    r.error("theta", "backstep arc must be instantaneous", [a.id.to_string()]);
                }
            }
        }
    }

    let expected_mu = d.partition.boundaries.len();
    if d.mu.len() != expected_mu {
        r.error("mu-count", format!("expected {expected_mu} distributions, found {}", d.mu.len()), [did.clone()]);
    }
    for (i, mu) in d.mu.iter().enumerate() {
        for (s, &v) in mu.iter() {
            if !d.has_state(s) {
                r.error("mu-state", format!("distribution at τ{i} references unknown state"), [s.to_string()]);
            }
            if v < T::zero() || v > T::one() {
                r.error("mu-range", format!("distribution at τ{i} has fraction outside [0,1]"), [s.to_string()]);
            }
        }
        if !mu.is_normalized() {
            r.error("mu-sum", format!("distribution not normalized at τ{i}"), [format!("τ{i}")]);
        }
    }
    if let Some(mu0) = d.mu.first() {
        if mu0.get(&d.initial) != T::one() {
            r.warning("mu0", "initial distribution is not concentrated on the initial state", [did.clone()]);
        }
    }

    if d.has_state(&d.initial) {
        let reach = d.forward_reachable();
        for s in d.ordered_states() {
            if !reach.contains(&s.id) {
                r.error("unreachable", "state unreachable from initial state", [s.id.to_string()]);
            }
        }
    }
    r
}
