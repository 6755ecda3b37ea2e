//! Small reference models used by tests, examples and the command line.

use std::collections::BTreeMap;

use crate::classifier::{Classifier, Predicate, Proposition, Scale};
use crate::diagram::{Arc, CanonicalDiagram, Distribution, StateNode, TimePartition};
use crate::hierarchy::{assemble, AggregationMap, CoupledArc, HsgdModel, ModelParts, Topology};
use crate::planner::TransitionRule;
use crate::scenario::ControlSymbol;

/// Three ordered states, two unit-time forward arcs and one backstep.
pub fn demo3() -> CanonicalDiagram<f64> {
    CanonicalDiagram {
        id: "D".into(),
        partition: TimePartition::new(vec![0, 2, 4]).unwrap(),
        states: vec![StateNode::new("S0", 0, 0), StateNode::new("S1", 1, 1), StateNode::new("S2", 2, 2)],
        arcs: vec![
            Arc::forward("a01", "S0", "S1", 1),
            Arc::forward("a12", "S1", "S2", 1),
            Arc::backstep("b10", "S1", "S0"),
        ],
        initial: "S0".into(),
        final_state: "S2".into(),
        mu: vec![Distribution::point("S0"), Distribution::point("S1"), Distribution::point("S2")],
        population: 4,
    }
}

/// `demo3` as a one-level model with symbols `x01` (cost 2) and `x12` (cost 3).
pub fn demo3_model() -> HsgdModel<f64> {
    let mut parts = ModelParts::new("demo3");
    parts.diagrams.push(demo3());
    parts.symbols = vec![ControlSymbol::individual("x01", "a01", 2.0), ControlSymbol::individual("x12", "a12", 3.0)];
    assemble(parts).expect("demo3 assembles")
}

/// S0: x < 10, S1: 10 ≤ x < 20, S2: x ≥ 20.
pub fn demo3_scale() -> Scale<f64> {
    Scale::from_propositions(vec![
        (Proposition::new("K0", vec![Predicate::below(0, 10.0)]), "S0".into()),
        (Proposition::new("K1", vec![Predicate::between(0, 10.0, 20.0)]), "S1".into()),
        (Proposition::new("K2", vec![Predicate::at_least(0, 20.0)]), "S2".into()),
    ])
}

pub fn demo3_classifier() -> Classifier<f64> {
    Classifier::single(1, demo3_scale())
}

fn two_state(id: &str, s0: &str, s1: &str, arc: &str, population: u64) -> CanonicalDiagram<f64> {
    CanonicalDiagram {
        id: id.into(),
        partition: TimePartition::new(vec![0, 4]).unwrap(),
        states: vec![StateNode::new(s0, 0, 0), StateNode::new(s1, 1, 1)],
        arcs: vec![Arc::forward(arc, s0, s1, 1)],
        initial: s0.into(),
        final_state: s1.into(),
        mu: vec![Distribution::point(s0), Distribution::point(s1)],
        population,
    }
}

/// Parent `P` (P0 → P1 via `p01`) over children `C1` and `C2` (S0 → S1 via
/// `c1` and `c2`); one interval `(0, 4]`, unit transit times.
pub fn parent_child_diagrams() -> (CanonicalDiagram<f64>, CanonicalDiagram<f64>, CanonicalDiagram<f64>) {
    (two_state("P", "P0", "P1", "p01", 1), two_state("C1", "S0", "S1", "c1", 4), two_state("C2", "S0", "S1", "c2", 4))
}

/// `(S0,S0)` ↦ P0, every other combination ↦ P1.
pub fn parent_child_aggregation() -> AggregationMap {
    AggregationMap::new(vec!["C1".into(), "C2".into()])
        .block("P0", vec![vec!["S0", "S0"]])
        .block("P1", vec![vec!["S1", "S0"], vec!["S0", "S1"], vec!["S1", "S1"]])
}

pub fn parent_child_parts() -> ModelParts<f64> {
    let (p, c1, c2) = parent_child_diagrams();
    let mut parts = ModelParts::new("parent-child");
    parts.diagrams = vec![p, c1, c2];
    parts.topology = Topology::new().edge("P", "C1").edge("P", "C2");
    parts.aggregations = BTreeMap::from([("P".into(), parent_child_aggregation())]);
    parts.couplings = vec![CoupledArc::new("p01", vec!["c1", "c2"], Some(2))];
    parts.symbols = vec![
        ControlSymbol::individual("x_c1", "c1", 1.0),
        ControlSymbol::individual("x_c2", "c2", 1.0),
        ControlSymbol::general("g", "p01", 2.0),
    ];
    parts
}

pub fn parent_child_model() -> HsgdModel<f64> {
    assemble(parent_child_parts()).expect("parent-child assembles")
}

/// r1 = S0→S1 (2, 1), r2 = S1→S2 forbidding S0 (3, 2), r3 = S0→S2 (6, 2).
pub fn planner_rules() -> Vec<TransitionRule<f64>> {
    vec![
        TransitionRule::new("r1", "S0", "S1", "u1", 2.0, 1),
        TransitionRule::new("r2", "S1", "S2", "u2", 3.0, 2).forbidding("S0"),
        TransitionRule::new("r3", "S0", "S2", "u3", 6.0, 2),
    ]
}
