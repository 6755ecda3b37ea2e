//! A checked model together with the operations the command line and the
//! service expose on it.

use hsgd_core::planner::{enumerate_plans, plan_to_time_diagram, Budgets, PlannerError};
use hsgd_core::scenario::{check_partial, evaluate, run, PartialCriterion, ScenarioError, TimeDiagram, Verdict};
use hsgd_core::{ControlScenario, DiagramId, HsgdModel, RuleId, ScenarioReport, StateId, Tick, Trajectory};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dsl::{parse_model, write_model, Diagnostic, ModelDocument};

/// Hex SHA-256 of the canonical source text, so formatting and comments in
/// the original file do not change it.
pub fn model_hash(doc: &ModelDocument) -> String {
    hex::encode(Sha256::digest(write_model(doc).as_bytes()))
}

#[derive(Debug, Error)]
pub enum OpError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("invalid horizon {0}: a run needs at least one tick")]
    InvalidHorizon(Tick),
    #[error("no rule base declared")]
    NoRules,
    #[error("several rule bases declared; name the diagram ({0})")]
    AmbiguousRules(String),
    #[error("no rule base for diagram `{0}`")]
    UnknownRules(DiagramId),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub report: ScenarioReport,
    pub trajectory: Trajectory,
    /// Present when the scenario declares support states or budgets.
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanView {
    pub rules: Vec<RuleId>,
    pub states: Vec<StateId>,
    pub total_resource: f64,
    pub total_time: Tick,
    /// Controls by tick when the plan starts at tick 0.
    pub schedule: TimeDiagram,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanOutcome {
    pub diagram: DiagramId,
    pub from: StateId,
    pub to: StateId,
    pub plans: Vec<PlanView>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagramSummary {
    pub id: DiagramId,
    pub level: usize,
    pub horizon: Tick,
    pub population: u64,
    pub states: Vec<StateId>,
    pub arcs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub name: String,
    pub levels: usize,
    pub diagrams: Vec<DiagramSummary>,
    pub symbols: Vec<String>,
    pub scenarios: Vec<String>,
    pub rule_bases: Vec<DiagramId>,
    pub classified: Vec<DiagramId>,
}

#[derive(Debug, Clone)]
pub struct Workspace {
    pub document: ModelDocument,
    pub model: HsgdModel,
    pub hash: String,
    /// Non-blocking findings of the model check.
    pub warnings: Vec<Diagnostic>,
}

impl Workspace {
    pub fn load(text: &str) -> Result<Self, Vec<Diagnostic>> {
        Self::from_document(parse_model(text)?)
    }

    pub fn from_document(document: ModelDocument) -> Result<Self, Vec<Diagnostic>> {
        match document.check() {
            Ok((model, report)) => {
                let warnings = document.diagnostics(&report);
                let hash = model_hash(&document);
                Ok(Self { document, model, hash, warnings })
            }
            Err(report) => Err(document.diagnostics(&report)),
        }
    }

    pub fn summary(&self) -> ModelSummary {
        let m = &self.model;
        ModelSummary {
            name: m.name.clone(),
            levels: m.levels,
            diagrams: m
                .diagrams
                .values()
                .map(|d| DiagramSummary {
                    id: d.id.clone(),
                    level: m.level_of(&d.id),
                    horizon: d.horizon(),
                    population: d.population,
                    states: d.ordered_states().iter().map(|s| s.id.clone()).collect(),
                    arcs: d.arcs.iter().map(|a| format!("{}: {}→{}", a.id, a.source, a.target)).collect(),
                })
                .collect(),
            symbols: m.symbols.iter().map(|s| s.id.to_string()).collect(),
            scenarios: self.document.scenarios.iter().map(|s| s.id.to_string()).collect(),
            rule_bases: self.document.rules.keys().cloned().collect(),
            classified: self.document.classifiers.keys().cloned().collect(),
        }
    }

    pub fn run(
        &self,
        scenario: &ControlScenario,
        partial: Option<&PartialCriterion<f64>>,
    ) -> Result<RunOutcome, OpError> {
        if scenario.horizon == 0 {
            return Err(OpError::InvalidHorizon(0));
        }
        let trajectory = run(&self.model, scenario)?;
        let report = evaluate(&self.model, &trajectory, scenario)?;
        let verdict = partial.map(|p| check_partial(&self.model, &trajectory, p)).transpose()?;
        Ok(RunOutcome { report, trajectory, verdict })
    }

    /// Runs a declared scenario, optionally over a different horizon.
    pub fn run_named(&self, id: &str, horizon: Option<Tick>) -> Result<RunOutcome, OpError> {
        let spec = self.document.scenario(id).ok_or_else(|| OpError::UnknownScenario(id.to_owned()))?;
        let mut scenario = spec.to_scenario(&self.model);
        if let Some(h) = horizon {
            scenario.horizon = h;
        }
        self.run(&scenario, spec.partial.as_ref())
    }

    /// The uncontrolled run, evaluated like any other scenario.
    pub fn inertial(&self, horizon: Tick) -> Result<RunOutcome, OpError> {
        let scenario = ControlScenario::new("inertial", &self.model, TimeDiagram::new(), horizon);
        self.run(&scenario, None)
    }

    pub fn plan(
        &self,
        diagram: Option<&DiagramId>,
        from: &StateId,
        to: &StateId,
        budgets: Budgets<f64>,
    ) -> Result<PlanOutcome, OpError> {
        let (id, rules) = match diagram {
            Some(d) => self.document.rules.get_key_value(d).ok_or_else(|| OpError::UnknownRules(d.clone()))?,
            None => {
                let mut all = self.document.rules.iter();
                match (all.next(), all.next()) {
                    (None, _) => return Err(OpError::NoRules),
                    (Some(only), None) => only,
                    _ => {
                        let names: Vec<&str> = self.document.rules.keys().map(|d| d.as_str()).collect();
                        return Err(OpError::AmbiguousRules(names.join(", ")));
                    }
                }
            }
        };
        let plans = enumerate_plans(rules, from, to, Some(budgets))?
            .iter()
            .map(|p| PlanView {
                rules: p.rule_ids(),
                states: p.states.clone(),
                total_resource: p.total_resource,
                total_time: p.total_time,
                schedule: plan_to_time_diagram(p, 0),
            })
            .collect();
        Ok(PlanOutcome { diagram: id.clone(), from: from.clone(), to: to.clone(), plans })
    }
}
