//! Composition operators, aggregation maps, coupled arcs and model assembly.

mod aggregation;
mod compose;
mod model;

use thiserror::Error;

use crate::report::ValidationReport;

pub use aggregation::{
    all_combos, combo_label, monotonicity_witnesses, validate_aggregation, AggregationBlock, AggregationMap, Combo,
};
pub use compose::{compose_parallel, compose_sequential, pair_id, CompositeArc, CompositeDiagram, CompositeState};
pub use model::{assemble, validate_coupling, CoupledArc, HsgdModel, InterLevelRule, ModelParts, Quorum, Topology};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HierarchyError {
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("identifier collision on {0}")]
    IdCollision(String),
    #[error("assembly rejected:\n{0}")]
    AssemblyRejected(ValidationReport),
}
