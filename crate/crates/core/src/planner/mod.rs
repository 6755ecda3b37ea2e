//! IF-THEN transition rules, Pareto plan search and the bridges from plans
//! to executable schedules.

mod objectives;
mod template;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagram::{Arc, CanonicalDiagram, Distribution, StateNode, TimePartition};
use crate::hierarchy::{assemble, HierarchyError, HsgdModel, ModelParts};
use crate::ids::{DiagramId, RuleId, StateId, SymbolId, Tick};
use crate::report::ValidationReport;
use crate::scalar::Scalar;
use crate::scenario::{BackstepGuard, ControlScenario, ControlSymbol, TimeDiagram};

pub use objectives::{
    check_objectives, validate_objectives, Goal, NodeRule, ObjectiveNode, ObjectivesReport, ObjectivesTree,
};
pub use template::{instantiate_template, CanonicalTemplate, TemplateError, TemplateOverrides, Transform};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlannerError {
    #[error("no rule mentions state {0}")]
    NoPlanExists(StateId),
    #[error("control {0} is used by several rules")]
    SharedControl(SymbolId),
    #[error("unknown goal state {0}")]
    UnknownGoalState(StateId),
    #[error("execution model rejected: {0}")]
    Assembly(#[from] HierarchyError),
}

/// IF the object is in `from` and `control` is applied THEN it reaches `to`
/// after `duration` ticks at cost `resource`; afterwards `forbidden` may not
/// be revisited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRule<T> {
    pub id: RuleId,
    pub from: StateId,
    pub to: StateId,
    pub forbidden: Option<StateId>,
    pub control: SymbolId,
    pub resource: T,
    pub duration: Tick,
}

impl<T: Scalar> TransitionRule<T> {
    pub fn new(
        id: impl Into<RuleId>,
        from: impl Into<StateId>,
        to: impl Into<StateId>,
        control: impl Into<SymbolId>,
        resource: T,
        duration: Tick,
    ) -> Self {
        Self {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            forbidden: None,
            control: control.into(),
            resource,
            duration,
        }
    }

    pub fn forbidding(mut self, state: impl Into<StateId>) -> Self {
        self.forbidden = Some(state.into());
        self
    }
}

pub fn validate_rules<T: Scalar>(rules: &[TransitionRule<T>], diagram: &CanonicalDiagram<T>) -> ValidationReport {
    let mut r = ValidationReport::new();
    let mut ids = BTreeSet::new();
    let mut triples = BTreeSet::new();
    for rule in rules {
        let id = rule.id.to_string();
        if !ids.insert(&rule.id) {
            r.error("duplicate_rule", "duplicate rule id", [id.clone()]);
        }
        if !triples.insert((&rule.from, &rule.to, &rule.control)) {
            r.error("duplicate_rule", "duplicate (from, to, control) rule", [id.clone()]);
        }
        let from = diagram.rank(&rule.from);
        let to = diagram.rank(&rule.to);
        for (s, rank) in [(&rule.from, from), (&rule.to, to)] {
            if rank.is_none() {
                r.error("unknown_state", "rule references unknown state", [id.clone(), s.to_string()]);
            }
        }
        if let (Some(f), Some(t)) = (from, to) {
            if f >= t {
                r.error("rank_violation", "rule rank violation: target must rank above source", [id.clone()]);
            }
        }
        if let Some(l) = &rule.forbidden {
            match (diagram.rank(l), to) {
                (None, _) => r.error("unknown_state", "rule references unknown state", [id.clone(), l.to_string()]),
                (Some(rl), Some(t)) if rl >= t => {
                    r.error("rank_violation", "forbidden backstep state must rank below the target", [id.clone()])
                }
                _ => {}
            }
        }
        if rule.resource < T::zero() {
            r.error("negative_resource", "rule resource must be nonnegative", [id.clone()]);
        }
        if rule.duration == 0 {
            r.error("zero_duration", "rule duration must be positive", [id]);
        }
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan<T> {
    pub steps: Vec<TransitionRule<T>>,
    pub total_resource: T,
    pub total_time: Tick,
    /// Visited states, start first.
    pub states: Vec<StateId>,
}

impl<T: Scalar> Plan<T> {
    pub fn rule_ids(&self) -> Vec<RuleId> {
        self.steps.iter().map(|r| r.id.clone()).collect()
    }

    pub fn costs(&self) -> (T, Tick) {
        (self.total_resource, self.total_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Budgets<T> {
    pub resource: Option<T>,
    pub time: Option<Tick>,
}

struct Search<'r, T> {
    out: &'r BTreeMap<&'r StateId, Vec<&'r TransitionRule<T>>>,
    goal: &'r StateId,
    budgets: Budgets<T>,
    found: Vec<Plan<T>>,
}

fn weakly_dominates<T: Scalar>(a: (T, Tick), b: (T, Tick)) -> bool {
    a.0 <= b.0 && a.1 <= b.1
}

impl<'r, T: Scalar> Search<'r, T> {
    fn over_budget(&self, res: T, time: Tick) -> bool {
        self.budgets.resource.is_some_and(|b| res > b) || self.budgets.time.is_some_and(|b| time > b)
    }

    fn offer(&mut self, chain: &[&TransitionRule<T>], states: &[StateId], res: T, time: Tick) {
        let costs = (res, time);
        if self.found.iter().any(|p| weakly_dominates(p.costs(), costs) && p.costs() != costs) {
            return;
        }
        self.found.retain(|p| !(weakly_dominates(costs, p.costs()) && p.costs() != costs));
        self.found.push(Plan {
            steps: chain.iter().map(|r| (*r).clone()).collect(),
            total_resource: res,
            total_time: time,
            states: states.to_vec(),
        });
    }

    fn dfs(&mut self, chain: &mut Vec<&'r TransitionRule<T>>, states: &mut Vec<StateId>, res: T, time: Tick) {
        let here = states.last().expect("start state").clone();
        if &here == self.goal {
            self.offer(chain, states, res, time);
            return;
        }
        // extensions cost strictly more time, so a plan no worse than this prefix beats all of them
        if self.found.iter().any(|p| weakly_dominates(p.costs(), (res, time))) {
            return;
        }
        let Some(next) = self.out.get(&here) else { return };
        for rule in next {
            if states.contains(&rule.to) {
                continue;
            }
            // a guard of an earlier rule forbids entering its state again
            if chain.iter().any(|r| r.forbidden.as_ref() == Some(&rule.to)) || rule.forbidden.as_ref() == Some(&rule.to)
            {
                continue;
            }
            let (r2, t2) = (res + rule.resource, time + rule.duration);
            if self.over_budget(r2, t2) {
                continue;
            }
            chain.push(rule);
            states.push(rule.to.clone());
            self.dfs(chain, states, r2, t2);
            states.pop();
            chain.pop();
        }
    }
}

/// Exhaustive depth-first search over simple rule chains from `start` to
/// `goal` with dominance pruning. Returns exactly the Pareto-optimal plans
/// over (total resource, total time), ordered by their rule id sequences.
pub fn enumerate_plans<T: Scalar>(
    rules: &[TransitionRule<T>],
    start: &StateId,
    goal: &StateId,
    budgets: Option<Budgets<T>>,
) -> Result<Vec<Plan<T>>, PlannerError> {
    let known: BTreeSet<&StateId> = rules.iter().flat_map(|r| [&r.from, &r.to]).collect();
    for s in [start, goal] {
        if !known.contains(s) {
            return Err(PlannerError::NoPlanExists(s.clone()));
        }
    }
    let mut sorted: Vec<&TransitionRule<T>> = rules.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out: BTreeMap<&StateId, Vec<&TransitionRule<T>>> = BTreeMap::new();
    for r in sorted {
        if r.duration > 0 {
            out.entry(&r.from).or_default().push(r);
        }
    }
    let mut search = Search {
        out: &out,
        goal,
        budgets: budgets.unwrap_or(Budgets { resource: None, time: None }),
        found: Vec::new(),
    };
    search.dfs(&mut Vec::new(), &mut vec![start.clone()], T::zero(), 0);
    let mut plans = search.found;
    plans.sort_by_key(|p| p.rule_ids());
    Ok(plans)
}

/// Schedules each rule's control at `start_tick` plus the durations of the
/// rules before it.
pub fn plan_to_time_diagram<T: Scalar>(plan: &Plan<T>, start_tick: Tick) -> TimeDiagram {
    let mut td = TimeDiagram::new();
    let mut t = start_tick;
    for rule in &plan.steps {
        td.add(t, [rule.control.clone()]);
        t += rule.duration;
    }
    td
}

/// A single-object model in which every rule reachable from `start` becomes a
/// forward arc (transit time = duration) addressed by its control. States
/// keep their ranks from `diagram`.
pub fn execution_model<T: Scalar>(
    diagram: &CanonicalDiagram<T>,
    rules: &[TransitionRule<T>],
    start: &StateId,
    goal: &StateId,
    horizon: Tick,
) -> Result<HsgdModel<T>, PlannerError> {
    let mut controls = BTreeSet::new();
    for r in rules {
        if !controls.insert(&r.control) {
            return Err(PlannerError::SharedControl(r.control.clone()));
        }
    }
    let mut reach: BTreeSet<&StateId> = [start].into();
    let mut used: Vec<&TransitionRule<T>> = Vec::new();
    loop {
        let before = used.len();
        for r in rules {
            if reach.contains(&r.from) && &r.from != goal && !used.iter().any(|u| u.id == r.id) {
                used.push(r);
                reach.insert(&r.to);
            }
        }
        if used.len() == before {
            break;
        }
    }
    if !reach.contains(goal) {
        return Err(PlannerError::NoPlanExists(goal.clone()));
    }
    let states: Vec<StateNode> = reach
        .iter()
        .map(|s| {
            let rank = diagram.rank(s).ok_or_else(|| PlannerError::UnknownGoalState((*s).clone()))?;
            Ok(StateNode::new((*s).clone(), rank, 0))
        })
        .collect::<Result<_, PlannerError>>()?;
    let arcs = used.iter().map(|r| Arc::forward(r.id.as_str(), r.from.clone(), r.to.clone(), r.duration)).collect();
    let exec = CanonicalDiagram {
        id: diagram.id.clone(),
        partition: TimePartition { boundaries: vec![0, horizon.max(1)] },
        states,
        arcs,
        initial: start.clone(),
        final_state: goal.clone(),
        mu: vec![Distribution::point(start.clone()), Distribution::point(goal.clone())],
        population: 1,
    };
    let mut parts = ModelParts::new(format!("{}-plan", diagram.id));
    parts.diagrams.push(exec);
    parts.symbols =
        used.iter().map(|r| ControlSymbol::individual(r.control.clone(), r.id.as_str(), r.resource)).collect();
    Ok(assemble(parts)?)
}

/// The scenario realizing `plan` from `start_tick`, with each rule's
/// forbidden state guarded against backsteps from the rule's firing until
/// the plan ends. States absent from the diagram cannot be re-entered and
/// get no guard.
pub fn plan_scenario<T: Scalar>(
    model: &HsgdModel<T>,
    diagram: &DiagramId,
    plan: &Plan<T>,
    start_tick: Tick,
    horizon: Tick,
) -> ControlScenario<T> {
    let end = start_tick + plan.total_time;
    let mut guards = Vec::new();
    let mut t = start_tick;
    for rule in &plan.steps {
        let present = |l: &StateId| model.diagram(diagram).is_some_and(|d| d.has_state(l));
        if let Some(l) = rule.forbidden.as_ref().filter(|l| present(l)) {
            guards.push(BackstepGuard { diagram: diagram.clone(), state: l.clone(), from: t, until: end });
        }
        t += rule.duration;
    }
    let mut sc = ControlScenario::new("plan", model, plan_to_time_diagram(plan, start_tick), horizon);
    sc.guards = guards;
    sc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{demo3, planner_rules};
    use crate::scenario::{evaluate, run};

    fn sid(s: &str) -> StateId {
        StateId::from(s)
    }

    #[test]
    fn fixture_rules_valid() {
        let r = validate_rules(&planner_rules(), &demo3());
        assert!(r.is_empty(), "{r}");
    }

    #[test]
    fn reversed_and_duplicate_rules() {
        let mut rules = planner_rules();
        rules.push(TransitionRule::new("bad", "S2", "S1", "u9", 1.0, 1));
        rules.push(rules[0].clone());
        let r = validate_rules(&rules, &demo3());
        assert!(r.has_code("rank_violation"));
        assert!(r.has_code("duplicate_rule"));
    }

    #[test]
    fn fixture_pareto_set() {
        let plans = enumerate_plans(&planner_rules(), &sid("S0"), &sid("S2"), None).unwrap();
        let got: Vec<_> = plans.iter().map(|p| (p.rule_ids(), p.costs())).collect();
        assert_eq!(got, vec![(vec!["r1".into(), "r2".into()], (5.0, 3)), (vec!["r3".into()], (6.0, 2))]);
    }

    #[test]
    fn resource_budget_filters() {
        let plans = enumerate_plans(
            &planner_rules(),
            &sid("S0"),
            &sid("S2"),
            Some(Budgets { resource: Some(5.0), time: None }),
        )
        .unwrap();
        assert_eq!(plans.len(), 1);
        assert_eq!(plans[0].rule_ids(), vec![RuleId::from("r1"), RuleId::from("r2")]);
    }

    #[test]
    fn start_is_goal() {
        let plans = enumerate_plans(&planner_rules(), &sid("S0"), &sid("S0"), None).unwrap();
        assert_eq!(plans.len(), 1);
        assert!(plans[0].steps.is_empty());
        assert_eq!(plans[0].costs(), (0.0, 0));
    }

    #[test]
    fn unknown_state() {
        assert_eq!(
            enumerate_plans(&planner_rules(), &sid("S0"), &sid("S7"), None).unwrap_err(),
            PlannerError::NoPlanExists(sid("S7"))
        );
    }

    #[test]
    fn time_diagrams() {
        let plans = enumerate_plans(&planner_rules(), &sid("S0"), &sid("S2"), None).unwrap();
        assert_eq!(plan_to_time_diagram(&plans[0], 0), TimeDiagram::new().at(0, &["u1"]).at(1, &["u2"]));
        assert_eq!(plan_to_time_diagram(&plans[1], 5), TimeDiagram::new().at(5, &["u3"]));
        let empty = Plan::<f64> { steps: vec![], total_resource: 0.0, total_time: 0, states: vec![sid("S0")] };
        assert!(plan_to_time_diagram(&empty, 0).is_empty());
    }

    #[test]
    fn plans_execute_on_time() {
        let rules = planner_rules();
        for plan in enumerate_plans(&rules, &sid("S0"), &sid("S2"), None).unwrap() {
            for start in [0, 2] {
                let horizon = start + plan.total_time + 1;
                let m = execution_model(&demo3(), &rules, &sid("S0"), &sid("S2"), horizon).unwrap();
                let sc = plan_scenario(&m, &"D".into(), &plan, start, horizon);
                let tr = run(&m, &sc).unwrap();
                let rep = evaluate(&m, &tr, &sc).unwrap();
                assert_eq!(rep.goal_times[&DiagramId::from("D")], Some(start + plan.total_time));
                let mut chain = tr.object_histories(&"D".into())[0].clone();
                chain.dedup();
                assert_eq!(chain, plan.states);
            }
        }
    }
}
