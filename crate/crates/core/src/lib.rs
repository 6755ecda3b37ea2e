//! Simulation and decision-support engine for hierarchical state graph diagrams.
//!
//! The crate is organised bottom-up:
//!
//! * [`diagram`] and [`dynamics`]: canonical diagrams, boundary distributions,
//!   per-arc counters and per-state occupancy.
//! * [`classifier`]: interval predicates, ordered scales, hierarchical
//!   classifiers, dynamics-type recognition and state re-estimation.
//! * [`hierarchy`]: sequential/parallel composition, aggregation maps,
//!   coupled arcs and model assembly.
//! * [`scenario`]: the step/run engine, scenario metrics and comparison.
//! * [`planner`]: IF-THEN transition rules, Pareto plan search, objectives
//!   trees and canonical templates.
//!
//! Every real-valued quantity is generic over [`Scalar`]; the aliases below
//! fix it to `f64` (the default used by the I/O layer) or to exact rationals.

pub mod classifier;
pub mod diagram;
pub mod dynamics;
pub mod fixtures;
pub mod hierarchy;
pub mod ids;
pub mod planner;
pub mod report;
pub mod scalar;
pub mod scenario;
#[cfg(feature = "testkit")]
pub mod testkit;

pub use num_rational::Rational64;

pub use diagram::{validate_canonical, Arc, ArcKind, StateNode, StateRole, TimePartition};
pub use dynamics::{compare_distributions, ActualDynamics, DynamicsError, PopulationEvent};
pub use ids::{ArcId, DiagramId, NodeId, ObjectId, PropositionId, RuleId, ScenarioId, StateId, SymbolId, Tick};
pub use report::{Severity, ValidationReport, Violation};
pub use scalar::Scalar;
pub use scenario::Trajectory;

pub type Distribution = diagram::Distribution<f64>;
pub type CanonicalDiagram = diagram::CanonicalDiagram<f64>;
pub type HsgdModel = hierarchy::HsgdModel<f64>;
pub type Classifier = classifier::Classifier<f64>;
pub type Scale = classifier::Scale<f64>;
pub type ControlScenario = scenario::ControlScenario<f64>;
pub type ScenarioReport = scenario::ScenarioReport<f64>;
pub type TransitionRule = planner::TransitionRule<f64>;
pub type Plan = planner::Plan<f64>;

pub type ExactDistribution = diagram::Distribution<Rational64>;
pub type ExactCanonicalDiagram = diagram::CanonicalDiagram<Rational64>;
pub type ExactHsgdModel = hierarchy::HsgdModel<Rational64>;
pub type ExactScenarioReport = scenario::ScenarioReport<Rational64>;
pub type ExactTransitionRule = planner::TransitionRule<Rational64>;
pub type ExactPlan = planner::Plan<Rational64>;
