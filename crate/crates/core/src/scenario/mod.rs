//! Control scenarios over an assembled model: the tick engine, inertial runs,
//! scenario metrics, efficiency series and scenario comparison.

mod engine;
mod metrics;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::HsgdModel;
use crate::ids::{ArcId, DiagramId, ScenarioId, StateId, SymbolId, Tick};
use crate::scalar::Scalar;

pub use engine::{
    run, run_inertial, step, Cause, CouplingWindow, DiagramTrace, Event, EventKind, SimObject, SimState, Trajectory,
    Transit,
};
pub use metrics::{
    check_partial, compare, completions_by_cause, efficiency_vectors, evaluate, EfficiencyVectors, PartialCriterion,
    RankedScenario, Ranking, RefutedBy, ScenarioReport, SupportState, Verdict,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("unknown symbol {0}")]
    UnknownSymbol(SymbolId),
    #[error("inconsistent simulation state: {0}")]
    InconsistentState(String),
    #[error("horizon {horizon} exceeds the model's horizon {max}")]
    HorizonExceeded { horizon: Tick, max: Tick },
    #[error("symbols scheduled at tick {0}, beyond the horizon")]
    ScheduleOutOfRange(Tick),
    #[error("backstep guard references unknown state {0}")]
    UnknownGuardState(StateId),
    #[error("trajectory was produced from model {found}, expected {expected}")]
    TrajectoryModelMismatch { expected: String, found: String },
    #[error("reports come from different models ({0} and {1})")]
    ModelMismatch(String, String),
    #[error("unknown support state {0}")]
    UnknownSupportState(StateId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolClass {
    Individual,
    General,
}

/// A control input addressing exactly one forward arc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSymbol<T> {
    pub id: SymbolId,
    pub class: SymbolClass,
    pub arc: ArcId,
    /// Resource charged each time the symbol is applied.
    pub cost: T,
}

impl<T: Scalar> ControlSymbol<T> {
    pub fn individual(id: impl Into<SymbolId>, arc: impl Into<ArcId>, cost: T) -> Self {
        Self { id: id.into(), class: SymbolClass::Individual, arc: arc.into(), cost }
    }

    pub fn general(id: impl Into<SymbolId>, arc: impl Into<ArcId>, cost: T) -> Self {
        Self { id: id.into(), class: SymbolClass::General, arc: arc.into(), cost }
    }
}

/// Tick → symbols applied at that tick.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeDiagram(pub BTreeMap<Tick, BTreeSet<SymbolId>>);

impl TimeDiagram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn at(mut self, tick: Tick, symbols: &[&str]) -> Self {
        self.add(tick, symbols.iter().map(|s| SymbolId::from(*s)));
        self
    }

    pub fn add(&mut self, tick: Tick, symbols: impl IntoIterator<Item = SymbolId>) {
        self.0.entry(tick).or_default().extend(symbols);
    }

    pub fn symbols_at(&self, tick: Tick) -> BTreeSet<SymbolId> {
        self.0.get(&tick).cloned().unwrap_or_default()
    }

    pub fn is_empty(&self) -> bool {
        self.0.values().all(BTreeSet::is_empty)
    }

    pub fn last_tick(&self) -> Option<Tick> {
        self.0.iter().rev().find(|(_, s)| !s.is_empty()).map(|(t, _)| *t)
    }
}

/// Weights of `w = a·normalized position − b·cumulative cost`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionConfig<T> {
    pub rank_weight: T,
    pub cost_weight: T,
}

impl<T: Scalar> Default for CriterionConfig<T> {
    fn default() -> Self {
        Self { rank_weight: T::one(), cost_weight: T::zero() }
    }
}

/// Disables backstep arcs into `state` during `from..=until`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackstepGuard {
    pub diagram: DiagramId,
    pub state: StateId,
    pub from: Tick,
    pub until: Tick,
}

impl BackstepGuard {
    pub fn active(&self, diagram: &DiagramId, target: &StateId, tick: Tick) -> bool {
        &self.diagram == diagram && &self.state == target && self.from <= tick && tick <= self.until
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlScenario<T> {
    pub id: ScenarioId,
    /// Name of the model the scenario was written for.
    pub model: String,
    pub schedule: TimeDiagram,
    pub horizon: Tick,
    pub priority: u32,
    pub criterion: CriterionConfig<T>,
    pub guards: Vec<BackstepGuard>,
}

impl<T: Scalar> ControlScenario<T> {
    pub fn new(id: impl Into<ScenarioId>, model: &HsgdModel<T>, schedule: TimeDiagram, horizon: Tick) -> Self {
        Self {
            id: id.into(),
            model: model.name.clone(),
            schedule,
            horizon,
            priority: 1,
            criterion: CriterionConfig::default(),
            guards: Vec::new(),
        }
    }
}

/// Checks that the scenario can run against `model`.
pub fn validate_scenario<T: Scalar>(model: &HsgdModel<T>, scenario: &ControlScenario<T>) -> Result<(), ScenarioError> {
    if scenario.model != model.name {
        return Err(ScenarioError::TrajectoryModelMismatch {
            expected: model.name.clone(),
            found: scenario.model.clone(),
        });
    }
    let max = model.max_horizon();
    if scenario.horizon > max {
        return Err(ScenarioError::HorizonExceeded { horizon: scenario.horizon, max });
    }
    for (&tick, symbols) in &scenario.schedule.0 {
        for s in symbols {
            if model.symbol(s).is_none() {
                return Err(ScenarioError::UnknownSymbol(s.clone()));
            }
        }
        if tick > scenario.horizon && !symbols.is_empty() {
            return Err(ScenarioError::ScheduleOutOfRange(tick));
        }
    }
    for g in &scenario.guards {
        if !model.diagram(&g.diagram).is_some_and(|d| d.has_state(&g.state)) {
            return Err(ScenarioError::UnknownGuardState(g.state.clone()));
        }
    }
    Ok(())
}
