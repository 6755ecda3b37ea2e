//! Scenario properties, efficiency series, partial criteria and comparison.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::engine::{Cause, EventKind, Trajectory};
use super::{ControlScenario, CriterionConfig, ScenarioError};
use crate::diagram::CanonicalDiagram;
use crate::dynamics::compare_distributions;
use crate::hierarchy::HsgdModel;
use crate::ids::{DiagramId, ObjectId, ScenarioId, StateId, SymbolId, Tick};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport<T> {
    pub scenario: ScenarioId,
    pub model: String,
    pub horizon: Tick,
    pub complete: bool,
    pub redundancy_count: u64,
    pub omitted_ratio: T,
    pub complexness: T,
    /// First tick at which the final state holds the whole population.
    pub goal_times: BTreeMap<DiagramId, Option<Tick>>,
    pub resource_total: T,
    /// L1 distance to the prescribed distribution at each boundary within the horizon.
    pub divergence: BTreeMap<DiagramId, Vec<T>>,
    pub final_criterion: BTreeMap<DiagramId, T>,
    pub priority: u32,
    /// `priority × Σ final criterion`.
    pub weighted_criterion: T,
}

impl<T: Scalar> ScenarioReport<T> {
    /// Latest goal time over all diagrams; `None` when some diagram never
    /// reaches its final state.
    pub fn max_goal_time(&self) -> Option<Tick> {
        self.goal_times.values().try_fold(0, |acc, g| g.map(|t| acc.max(t)))
    }
}

fn check_model<T: Scalar>(model: &HsgdModel<T>, trajectory: &Trajectory) -> Result<(), ScenarioError> {
    if trajectory.model != model.name || trajectory.diagrams.keys().ne(model.diagrams.keys()) {
        return Err(ScenarioError::TrajectoryModelMismatch {
            expected: model.name.clone(),
            found: trajectory.model.clone(),
        });
    }
    Ok(())
}

fn ratio<T: Scalar>(num: u64, den: u64) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::from_count(num) / T::from_count(den)
    }
}

fn goal_time<T: Scalar>(d: &CanonicalDiagram<T>, trajectory: &Trajectory) -> Option<Tick> {
    let series = trajectory.diagrams.get(&d.id)?.dynamics.occupancy.get(&d.final_state)?;
    series.iter().position(|&n| n == d.population).map(|t| t as Tick)
}

fn resource_total<T: Scalar>(model: &HsgdModel<T>, trajectory: &Trajectory) -> T {
    trajectory.events.iter().fold(T::zero(), |acc, e| match &e.kind {
        EventKind::SymbolApplied { symbol, .. } => acc + model.symbol(symbol).map_or(T::zero(), |s| s.cost),
        _ => acc,
    })
}

pub fn evaluate<T: Scalar>(
    model: &HsgdModel<T>,
    trajectory: &Trajectory,
    scenario: &ControlScenario<T>,
) -> Result<ScenarioReport<T>, ScenarioError> {
    check_model(model, trajectory)?;
    if scenario.model != model.name {
        return Err(ScenarioError::TrajectoryModelMismatch {
            expected: model.name.clone(),
            found: scenario.model.clone(),
        });
    }

    let goal_times: BTreeMap<DiagramId, Option<Tick>> =
        model.diagrams.values().map(|d| (d.id.clone(), goal_time(d, trajectory))).collect();
    let complete = goal_times.values().all(Option::is_some);

    let coupled = model.coupled_arcs();
    let mut forward = 0u64;
    let mut coupled_forward = 0u64;
    let mut backsteps = 0u64;
    let mut omitted = 0u64;
    let mut advanced: BTreeMap<(&DiagramId, ObjectId), BTreeSet<&StateId>> = BTreeMap::new();
    for e in &trajectory.events {
        match &e.kind {
            EventKind::Arrival { arc, target, objects, .. } => {
                forward += objects.len() as u64;
                if coupled.contains(arc) {
                    coupled_forward += objects.len() as u64;
                }
                for &o in objects {
                    advanced.entry((&e.diagram, o)).or_default().insert(target);
                }
            }
            EventKind::Backstep { source, objects, .. } => {
                backsteps += objects.len() as u64;
                omitted += objects
                    .iter()
                    .filter(|&&o| advanced.get(&(&e.diagram, o)).is_some_and(|s| s.contains(source)))
                    .count() as u64;
            }
            _ => {}
        }
    }

    let mut divergence = BTreeMap::new();
    for d in model.diagrams.values() {
        let dynamics = &trajectory.diagrams[&d.id].dynamics;
        let states: BTreeSet<StateId> = d.states.iter().map(|s| s.id.clone()).collect();
        let mut series = Vec::new();
        if d.population > 0 {
            for (i, &tau) in d.partition.boundaries.iter().enumerate() {
                if tau > trajectory.horizon {
                    break;
                }
                let (Some(mu), Ok(observed)) = (d.mu.get(i), dynamics.distribution_at::<T>(tau as i64)) else {
                    continue;
                };
                if let Ok(dist) = compare_distributions(mu, &observed, &states) {
                    series.push(dist);
                }
            }
        }
        divergence.insert(d.id.clone(), series);
    }

    let vectors = efficiency_vectors(model, trajectory, &scenario.criterion)?;
    let final_criterion: BTreeMap<DiagramId, T> =
        vectors.iter().map(|(id, v)| (id.clone(), v.w.last().copied().unwrap_or_else(T::zero))).collect();
    let total_w = final_criterion.values().fold(T::zero(), |a, &w| a + w);

    Ok(ScenarioReport {
        scenario: scenario.id.clone(),
        model: model.name.clone(),
        horizon: trajectory.horizon,
        complete,
        redundancy_count: trajectory.redundancy_count,
        omitted_ratio: ratio(omitted, forward + backsteps),
        complexness: ratio(coupled_forward, forward),
        goal_times,
        resource_total: resource_total(model, trajectory),
        divergence,
        final_criterion,
        priority: scenario.priority,
        weighted_criterion: T::from_count(u64::from(scenario.priority)) * total_w,
    })
}

/// Per-diagram efficiency series indexed by tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyVectors<T> {
    /// Symbols applied to the diagram at each tick.
    pub u: Vec<Vec<SymbolId>>,
    /// Modal state: highest occupancy counting objects in transit at their
    /// source, ties to the lower rank.
    pub s: Vec<StateId>,
    pub w: Vec<T>,
}

pub fn efficiency_vectors<T: Scalar>(
    model: &HsgdModel<T>,
    trajectory: &Trajectory,
    cfg: &CriterionConfig<T>,
) -> Result<BTreeMap<DiagramId, EfficiencyVectors<T>>, ScenarioError> {
    check_model(model, trajectory)?;
    let len = trajectory.horizon as usize + 1;
    let mut out = BTreeMap::new();
    for d in model.diagrams.values() {
        let trace = &trajectory.diagrams[&d.id];
        let mut u = vec![Vec::new(); len];
        let mut cost = vec![T::zero(); len];
        for e in trajectory.events.iter().filter(|e| e.diagram == d.id) {
            if let EventKind::SymbolApplied { symbol, .. } = &e.kind {
                u[e.tick as usize].push(symbol.clone());
                cost[e.tick as usize] = cost[e.tick as usize] + model.symbol(symbol).map_or(T::zero(), |s| s.cost);
            }
        }
        let ordered = d.ordered_states();
        let goal = d.position(&d.final_state).unwrap_or(0);
        let mut s = Vec::with_capacity(len);
        let mut w = Vec::with_capacity(len);
        let mut spent = T::zero();
        for (t, &step_cost) in cost.iter().enumerate() {
            let mut best: Option<(u64, usize)> = None;
            for (pos, st) in ordered.iter().enumerate() {
                let n = trace.dynamics.occupancy[&st.id][t] + trace.transit_by_source[&st.id][t];
                if best.is_none_or(|(bn, _)| n > bn) {
                    best = Some((n, pos));
                }
            }
            let pos = best.map_or(0, |(_, p)| p);
            s.push(ordered[pos].id.clone());
            spent = spent + step_cost;
            let progress = if goal == 0 { T::one() } else { T::from_count(pos as u64) / T::from_count(goal as u64) };
            w.push(cfg.rank_weight * progress - cfg.cost_weight * spent);
        }
        out.insert(d.id.clone(), EfficiencyVectors { u, s, w });
    }
    Ok(out)
}

/// A checkpoint: `state` must be fully occupied by `deadline`. The diagram
/// may be omitted when the state id is unique in the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportState {
    pub diagram: Option<DiagramId>,
    pub state: StateId,
    pub deadline: Tick,
}

impl SupportState {
    pub fn new(state: impl Into<StateId>, deadline: Tick) -> Self {
        Self { diagram: None, state: state.into(), deadline }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PartialCriterion<T> {
    pub supports: Vec<SupportState>,
    pub resource_budget: Option<T>,
    /// Bound on the tick at which the last support is reached.
    pub time_budget: Option<Tick>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefutedBy {
    Support(StateId),
    ResourceBudget,
    TimeBudget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Confirmed,
    Refuted(RefutedBy),
}

pub fn check_partial<T: Scalar>(
    model: &HsgdModel<T>,
    trajectory: &Trajectory,
    criterion: &PartialCriterion<T>,
) -> Result<Verdict, ScenarioError> {
    check_model(model, trajectory)?;
    let mut resolved = Vec::with_capacity(criterion.supports.len());
    for sup in &criterion.supports {
        let d = match &sup.diagram {
            Some(id) => model.diagram(id).filter(|d| d.has_state(&sup.state)),
            None => match model.diagrams_with_state(&sup.state).as_slice() {
                [only] => Some(*only),
                _ => None,
            },
        };
        resolved.push((d.ok_or_else(|| ScenarioError::UnknownSupportState(sup.state.clone()))?, sup));
    }

    let mut earliest: Tick = 0;
    for (d, sup) in resolved {
        let series = &trajectory.diagrams[&d.id].dynamics.occupancy[&sup.state];
        let hit = (earliest as usize..series.len()).find(|&t| series[t] == d.population).map(|t| t as Tick);
        match hit {
            Some(t) if t <= sup.deadline => earliest = t,
            _ => return Ok(Verdict::Refuted(RefutedBy::Support(sup.state.clone()))),
        }
    }
    if let Some(budget) = criterion.resource_budget {
        if resource_total(model, trajectory) > budget {
            return Ok(Verdict::Refuted(RefutedBy::ResourceBudget));
        }
    }
    if let Some(budget) = criterion.time_budget {
        if !criterion.supports.is_empty() && earliest > budget {
            return Ok(Verdict::Refuted(RefutedBy::TimeBudget));
        }
    }
    Ok(Verdict::Confirmed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedScenario {
    pub scenario: ScenarioId,
    /// 0 is the Pareto frontier.
    pub front: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ranking {
    pub order: Vec<RankedScenario>,
}

impl Ranking {
    pub fn ids(&self) -> Vec<&str> {
        self.order.iter().map(|r| r.scenario.as_str()).collect()
    }

    pub fn frontier(&self) -> impl Iterator<Item = &ScenarioId> {
        self.order.iter().filter(|r| r.front == 0).map(|r| &r.scenario)
    }
}

fn cmp_goal(a: Option<Tick>, b: Option<Tick>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

fn cmp_scalar<T: Scalar>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// `a` is no worse in completeness, resource and latest goal time, and
/// strictly better in one of them.
fn dominates<T: Scalar>(a: &ScenarioReport<T>, b: &ScenarioReport<T>) -> bool {
    let c = b.complete.cmp(&a.complete);
    let r = cmp_scalar(a.resource_total, b.resource_total);
    let g = cmp_goal(a.max_goal_time(), b.max_goal_time());
    let all = [c, r, g];
    all.iter().all(|o| *o != Ordering::Greater) && all.contains(&Ordering::Less)
}

/// Non-dominated sorting over (complete, resource, latest goal time), then
/// lexicographic within each front by completeness, goal time, resource,
/// omitted ratio and scenario id.
pub fn compare<T: Scalar>(reports: &[ScenarioReport<T>]) -> Result<Ranking, ScenarioError> {
    if let Some(first) = reports.first() {
        if let Some(other) = reports.iter().find(|r| r.model != first.model) {
            return Err(ScenarioError::ModelMismatch(first.model.clone(), other.model.clone()));
        }
    }
    let mut remaining: Vec<&ScenarioReport<T>> = reports.iter().collect();
    let mut order = Vec::with_capacity(reports.len());
    let mut front = 0;
    while !remaining.is_empty() {
        let (mut current, rest): (Vec<_>, Vec<_>) =
            remaining.iter().partition(|r| !remaining.iter().any(|o| dominates(o, r)));
        current.sort_by(|a: &&ScenarioReport<T>, b: &&ScenarioReport<T>| {
            b.complete
                .cmp(&a.complete)
                .then_with(|| cmp_goal(a.max_goal_time(), b.max_goal_time()))
                .then_with(|| cmp_scalar(a.resource_total, b.resource_total))
                .then_with(|| cmp_scalar(a.omitted_ratio, b.omitted_ratio))
                .then_with(|| a.scenario.cmp(&b.scenario))
        });
        order.extend(current.into_iter().map(|r| RankedScenario { scenario: r.scenario.clone(), front }));
        remaining = rest;
        front += 1;
    }
    Ok(Ranking { order })
}

/// Forward completions per cause; a convenience for reports and tests.
pub fn completions_by_cause(trajectory: &Trajectory) -> BTreeMap<Cause, u64> {
    let mut out = BTreeMap::new();
    for e in &trajectory.events {
        if let EventKind::Arrival { cause, objects, .. } = &e.kind {
            *out.entry(*cause).or_default() += objects.len() as u64;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{run, run_inertial, TimeDiagram};
    use super::*;
    use crate::fixtures::{demo3_model, parent_child_model};

    fn demo3_full() -> (HsgdModel<f64>, ControlScenario<f64>, Trajectory) {
        let m = demo3_model();
        let sc = ControlScenario::new("full", &m, TimeDiagram::new().at(0, &["x01"]).at(2, &["x12"]), 4);
        let tr = run(&m, &sc).unwrap();
        (m, sc, tr)
    }

    #[test]
    fn demo3_report() {
        let (m, sc, tr) = demo3_full();
        let r = evaluate(&m, &tr, &sc).unwrap();
        assert!(r.complete);
        assert_eq!(r.redundancy_count, 0);
        assert_eq!(r.omitted_ratio, 0.0);
        assert_eq!(r.complexness, 0.0);
        assert_eq!(r.goal_times[&DiagramId::from("D")], Some(3));
        assert_eq!(r.resource_total, 5.0);
    }

    #[test]
    fn demo3_criterion_series() {
        let (m, _, tr) = demo3_full();
        let v = efficiency_vectors(&m, &tr, &CriterionConfig { rank_weight: 1.0, cost_weight: 0.0 }).unwrap();
        assert_eq!(v[&DiagramId::from("D")].w, vec![0.0, 0.5, 0.5, 1.0, 1.0]);
        let v = efficiency_vectors(&m, &tr, &CriterionConfig { rank_weight: 0.0, cost_weight: 1.0 }).unwrap();
        assert_eq!(*v[&DiagramId::from("D")].w.last().unwrap(), -5.0);
    }

    #[test]
    fn empty_run_metrics() {
        let m = demo3_model();
        let tr = run_inertial(&m, 0);
        let sc = ControlScenario::new("inertial", &m, TimeDiagram::new(), 0);
        let r = evaluate(&m, &tr, &sc).unwrap();
        assert!(!r.complete);
        assert_eq!((r.omitted_ratio, r.complexness), (0.0, 0.0));
        let v = efficiency_vectors(&m, &tr, &CriterionConfig::default()).unwrap();
        assert_eq!(v[&DiagramId::from("D")].w, vec![0.0]);
    }

    #[test]
    fn general_symbol_run_is_all_coupled() {
        let m = parent_child_model();
        let sc = ControlScenario::new("g", &m, TimeDiagram::new().at(0, &["g"]), 4);
        let tr = run(&m, &sc).unwrap();
        let r = evaluate(&m, &tr, &sc).unwrap();
        assert!(r.complete);
        assert_eq!(r.complexness, 1.0);
    }

    #[test]
    fn partial_criteria() {
        let (m, _, tr) = demo3_full();
        let crit = |s: Vec<SupportState>| PartialCriterion { supports: s, resource_budget: None, time_budget: None };
        assert_eq!(
            check_partial(&m, &tr, &crit(vec![SupportState::new("S1", 2), SupportState::new("S2", 4)])).unwrap(),
            Verdict::Confirmed
        );
        assert_eq!(
            check_partial(&m, &tr, &crit(vec![SupportState::new("S2", 2)])).unwrap(),
            Verdict::Refuted(RefutedBy::Support("S2".into()))
        );
        assert_eq!(check_partial(&m, &tr, &crit(vec![])).unwrap(), Verdict::Confirmed);
        assert_eq!(
            check_partial(&m, &tr, &crit(vec![SupportState::new("S9", 2)])),
            Err(ScenarioError::UnknownSupportState("S9".into()))
        );
    }

    fn report(id: &str, complete: bool, r: f64, t: Option<Tick>) -> ScenarioReport<f64> {
        ScenarioReport {
            scenario: id.into(),
            model: "m".into(),
            horizon: 4,
            complete,
            redundancy_count: 0,
            omitted_ratio: 0.0,
            complexness: 0.0,
            goal_times: [(DiagramId::from("D"), t)].into(),
            resource_total: r,
            divergence: BTreeMap::new(),
            final_criterion: BTreeMap::new(),
            priority: 1,
            weighted_criterion: 0.0,
        }
    }

    #[test]
    fn compare_examples() {
        let rk = compare(&[report("a", true, 5.0, Some(3)), report("b", true, 6.0, Some(2))]).unwrap();
        assert_eq!(rk.frontier().count(), 2);
        let rk = compare(&[report("x", false, 1.0, None), report("y", true, 5.0, Some(3))]).unwrap();
        assert_eq!(rk.ids(), ["y", "x"]);
        let rk = compare(&[report("b", true, 5.0, Some(3)), report("a", true, 5.0, Some(3))]).unwrap();
        assert_eq!(rk.ids(), ["a", "b"]);
        let mut other = report("c", true, 1.0, Some(1));
        other.model = "n".into();
        assert!(matches!(compare(&[report("a", true, 5.0, Some(3)), other]), Err(ScenarioError::ModelMismatch(..))));
    }
}
