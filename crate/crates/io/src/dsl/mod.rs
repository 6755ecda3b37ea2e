//! Line-oriented model language.
//!
//! A document is a sequence of blocks, each opened by a header line and
//! closed by `end`, plus the single-line directives `model` and `quorum`.
//! `#` starts a comment. Every entity carries an explicit id so that
//! diagnostics can point at the line that declared or referenced it.

mod parse;
mod write;

use std::collections::BTreeMap;
use std::fmt;

use hsgd_core::classifier::{validate_classifier_for, Classifier};
use hsgd_core::hierarchy::{assemble, AggregationMap, CoupledArc, HierarchyError, ModelParts, Quorum, Topology};
use hsgd_core::planner::{validate_objectives, validate_rules, ObjectivesTree, TransitionRule};
use hsgd_core::scenario::{
    validate_scenario, BackstepGuard, ControlSymbol, CriterionConfig, PartialCriterion, TimeDiagram,
};
use hsgd_core::{
    CanonicalDiagram, ControlScenario, DiagramId, HsgdModel, ScenarioId, Severity, Tick, ValidationReport,
};
use serde::Serialize;

pub use parse::parse_model;
pub use write::write_model;

/// 1-based position of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

impl Location {
    pub const START: Location = Location { line: 1, column: 1 };
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub code: &'static str,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: &'static str, at: Location, message: impl Into<String>) -> Self {
        Self { code, line: at.line, column: at.column, message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {} {}", self.line, self.column, self.code, self.message)
    }
}

/// Where each declared entity was written, keyed `kind:id` (for example
/// `arc:a01`, `state:D/S0`, `scenario:s1`).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SourceMap(pub BTreeMap<String, Location>);

impl SourceMap {
    pub fn get(&self, key: &str) -> Option<Location> {
        self.0.get(key).copied()
    }

    /// First subject of a violation that names a declared entity.
    fn locate_subjects(&self, subjects: &[String]) -> Location {
        const KINDS: [&str; 7] = ["arc", "symbol", "scenario", "rule", "node", "diagram", "scale"];
        for s in subjects {
            for kind in KINDS {
                if let Some(at) = self.get(&format!("{kind}:{s}")) {
                    return at;
                }
            }
        }
        for s in subjects {
            if let Some((_, at)) = self.0.iter().find(|(k, _)| k.starts_with("state:") && k.ends_with(&format!("/{s}")))
            {
                return *at;
            }
        }
        self.get("model").unwrap_or(Location::START)
    }
}

/// A named scenario as written in the document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub horizon: Tick,
    pub priority: u32,
    pub criterion: CriterionConfig<f64>,
    pub schedule: TimeDiagram,
    pub guards: Vec<BackstepGuard>,
    /// Support states and budgets the run is checked against.
    pub partial: Option<PartialCriterion<f64>>,
}

impl ScenarioSpec {
    pub fn to_scenario(&self, model: &HsgdModel) -> ControlScenario {
        let mut sc = ControlScenario::new(self.id.clone(), model, self.schedule.clone(), self.horizon);
        sc.priority = self.priority;
        sc.criterion = self.criterion;
        sc.guards = self.guards.clone();
        sc
    }
}

/// Parsed model source. Equality ignores source locations.
#[derive(Debug, Clone, Serialize)]
pub struct ModelDocument {
    pub name: String,
    pub default_quorum: Quorum,
    pub diagrams: Vec<CanonicalDiagram>,
    pub classifiers: BTreeMap<DiagramId, Classifier<f64>>,
    pub topology: Topology,
    pub aggregations: BTreeMap<DiagramId, AggregationMap>,
    pub couplings: Vec<CoupledArc>,
    pub symbols: Vec<ControlSymbol<f64>>,
    pub rules: BTreeMap<DiagramId, Vec<TransitionRule<f64>>>,
    pub objectives: Option<ObjectivesTree>,
    pub scenarios: Vec<ScenarioSpec>,
    #[serde(skip)]
    pub locations: SourceMap,
}

impl PartialEq for ModelDocument {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.default_quorum == other.default_quorum
            && self.diagrams == other.diagrams
            && self.classifiers == other.classifiers
            && self.topology == other.topology
            && self.aggregations == other.aggregations
            && self.couplings == other.couplings
            && self.symbols == other.symbols
            && self.rules == other.rules
            && self.objectives == other.objectives
            && self.scenarios == other.scenarios
    }
}

impl ModelDocument {
    pub fn empty(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            default_quorum: Quorum::All,
            diagrams: Vec::new(),
            classifiers: BTreeMap::new(),
            topology: Topology::new(),
            aggregations: BTreeMap::new(),
            couplings: Vec::new(),
            symbols: Vec::new(),
            rules: BTreeMap::new(),
            objectives: None,
            scenarios: Vec::new(),
            locations: SourceMap::default(),
        }
    }

    pub fn scenario(&self, id: &str) -> Option<&ScenarioSpec> {
        self.scenarios.iter().find(|s| s.id.as_str() == id)
    }

    pub fn parts(&self) -> ModelParts<f64> {
        ModelParts {
            name: self.name.clone(),
            diagrams: self.diagrams.clone(),
            topology: self.topology.clone(),
            aggregations: self.aggregations.clone(),
            couplings: self.couplings.clone(),
            symbols: self.symbols.clone(),
            default_quorum: self.default_quorum,
        }
    }

    /// Builds the model, or returns the validation report that blocked it.
    pub fn assemble(&self) -> Result<HsgdModel, ValidationReport> {
        assemble(self.parts()).map_err(|e| match e {
            HierarchyError::AssemblyRejected(r) => r,
            other => {
                let mut r = ValidationReport::new();
                r.error("assembly", other.to_string(), Vec::new());
                r
            }
        })
    }

    /// Assembles the model and checks classifiers, rule bases, the
    /// objectives tree and every scenario against it.
    pub fn check(&self) -> Result<(HsgdModel, ValidationReport), ValidationReport> {
        let model = self.assemble()?;
        let mut r = ValidationReport::new();
        for d in &self.diagrams {
            if let Some(c) = self.classifiers.get(&d.id) {
                r.extend(validate_classifier_for(c, d));
            }
            if let Some(rules) = self.rules.get(&d.id) {
                r.extend(validate_rules(rules, d));
            }
        }
        if let Some(tree) = &self.objectives {
            r.extend(validate_objectives(tree, &model));
        }
        for spec in &self.scenarios {
            if let Err(e) = validate_scenario(&model, &spec.to_scenario(&model)) {
                r.error("scenario", e.to_string(), [spec.id.to_string()]);
            }
        }
        if r.is_valid() {
            Ok((model, r))
        } else {
            Err(r)
        }
    }

    /// Located diagnostics for the violations of a report.
    pub fn diagnostics(&self, report: &ValidationReport) -> Vec<Diagnostic> {
        report
            .violations
            .iter()
            .map(|v| {
                let code = match v.severity {
                    Severity::Error => "E_INVALID",
                    Severity::Warning => "W_INVALID",
                };
                Diagnostic::new(code, self.locations.locate_subjects(&v.subjects), format!("{}: {v}", v.code))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn located_subjects_prefer_declared_entities() {
        let mut map = SourceMap::default();
        map.0.insert("arc:a01".into(), Location { line: 7, column: 7 });
        map.0.insert("state:D/S1".into(), Location { line: 4, column: 9 });
        assert_eq!(map.locate_subjects(&["a01".into()]).line, 7);
        assert_eq!(map.locate_subjects(&["S1".into()]).line, 4);
        assert_eq!(map.locate_subjects(&["nothing".into()]), Location::START);
    }
}
