//! Aggregation of child-state combinations into parent states.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::diagram::CanonicalDiagram;
use crate::ids::{DiagramId, StateId};
use crate::report::ValidationReport;
use crate::scalar::Scalar;

/// A tuple of child states, one per child in [`AggregationMap::children`] order.
pub type Combo = Vec<StateId>;

pub fn combo_label(c: &[StateId]) -> String {
    let parts: Vec<&str> = c.iter().map(|s| s.as_str()).collect();
    format!("({})", parts.join(","))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationBlock {
    pub parent_state: StateId,
    pub combos: Vec<Combo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationMap {
    pub children: Vec<DiagramId>,
    pub blocks: Vec<AggregationBlock>,
}

impl AggregationMap {
    pub fn new(children: Vec<DiagramId>) -> Self {
        Self { children, blocks: Vec::new() }
    }

    pub fn block(mut self, parent_state: impl Into<StateId>, combos: Vec<Vec<&str>>) -> Self {
        self.blocks.push(AggregationBlock {
            parent_state: parent_state.into(),
            combos: combos.into_iter().map(|c| c.into_iter().map(StateId::from).collect()).collect(),
        });
        self
    }

    /// Parent state of the first block holding `combo`.
    pub fn parent_of(&self, combo: &[StateId]) -> Option<&StateId> {
        self.blocks.iter().find(|b| b.combos.iter().any(|c| c.as_slice() == combo)).map(|b| &b.parent_state)
    }

    pub fn position(&self, child: &DiagramId) -> Option<usize> {
        self.children.iter().position(|c| c == child)
    }
}

fn cartesian(sets: &[Vec<StateId>]) -> Vec<Combo> {
    let mut out: Vec<Combo> = vec![Vec::new()];
    for set in sets {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                set.iter().map(move |s| {
                    let mut c = prefix.clone();
                    c.push(s.clone());
                    c
                })
            })
            .collect();
    }
    out
}

/// Checks arity and ids, block disjointness, coverage of every combination of
/// reachable child states, and order monotonicity. Every monotonicity
/// violation is reported with its witness pair `(c, c′)` where `c ≤ c′`
/// componentwise but `parent(c)` ranks above `parent(c′)`.
pub fn validate_aggregation<T: Scalar>(
    children: &[&CanonicalDiagram<T>],
    map: &AggregationMap,
    parent: &CanonicalDiagram<T>,
) -> ValidationReport {
    let mut r = ValidationReport::new();
    let child_ids: Vec<&DiagramId> = children.iter().map(|c| &c.id).collect();
    if child_ids != map.children.iter().collect::<Vec<_>>() {
        r.error(
            "aggregation_children",
            "aggregation map children do not match the child diagrams",
            map.children.iter().map(|c| c.to_string()),
        );
        return r;
    }

    let mut owner: BTreeMap<&Combo, &StateId> = BTreeMap::new();
    for block in &map.blocks {
        if !parent.has_state(&block.parent_state) {
            r.error(
                "unknown_state",
                "aggregation block maps to unknown parent state",
                [block.parent_state.to_string()],
            );
        }
        for combo in &block.combos {
            if combo.len() != children.len() {
                r.error("combo_arity", "combination has wrong arity", [combo_label(combo)]);
                continue;
            }
            for (s, child) in combo.iter().zip(children) {
                if !child.has_state(s) {
                    r.error(
                        "unknown_state",
                        "combination references unknown child state",
                        [combo_label(combo), s.to_string()],
                    );
                }
            }
            match owner.get(combo) {
                Some(prev) if *prev != &block.parent_state => {
                    r.error(
                        "blocks_not_disjoint",
                        "aggregation blocks not disjoint",
                        [combo_label(combo), prev.to_string(), block.parent_state.to_string()],
                    );
                }
                Some(_) => {}
                None => {
                    owner.insert(combo, &block.parent_state);
                }
            }
        }
    }
    if !r.is_valid() {
        return r;
    }

    let reachable: Vec<Vec<StateId>> = children
        .iter()
        .map(|c| {
            let reach = c.forward_reachable();
            c.ordered_states().into_iter().filter(|s| reach.contains(&s.id)).map(|s| s.id.clone()).collect()
        })
        .collect();
    for combo in cartesian(&reachable) {
        if !owner.contains_key(&combo) {
            r.error("combo_uncovered", "combination not covered by any block", [combo_label(&combo)]);
        }
    }

    let ranked: Vec<(Vec<u32>, u32, &Combo)> = owner
        .iter()
        .filter_map(|(combo, p)| {
            let ranks: Option<Vec<u32>> = combo.iter().zip(children).map(|(s, c)| c.rank(s)).collect();
            Some((ranks?, parent.rank(p)?, *combo))
        })
        .collect();
    for (ra, pa, ca) in &ranked {
        for (rb, pb, cb) in &ranked {
            let below = ra.iter().zip(rb).all(|(x, y)| x <= y);
            if below && ca != cb && pa > pb {
                r.error("not_monotone", "aggregation not monotone", [combo_label(ca), combo_label(cb)]);
            }
        }
    }
    r
}

/// All combinations of the children's states, in rank order per component.
pub fn all_combos<T: Scalar>(children: &[&CanonicalDiagram<T>]) -> Vec<Combo> {
    let sets: Vec<Vec<StateId>> =
        children.iter().map(|c| c.ordered_states().into_iter().map(|s| s.id.clone()).collect()).collect();
    cartesian(&sets)
}

/// Witness pairs of a monotonicity violation among `map`'s combos, recomputed
/// without the rest of the validation.
pub fn monotonicity_witnesses<T: Scalar>(
    children: &[&CanonicalDiagram<T>],
    map: &AggregationMap,
    parent: &CanonicalDiagram<T>,
) -> BTreeSet<(String, String)> {
    validate_aggregation(children, map, parent)
        .violations
        .iter()
        .filter(|v| v.code == "not_monotone")
        .map(|v| (v.subjects[0].clone(), v.subjects[1].clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{parent_child_aggregation, parent_child_diagrams};

    fn parts() -> (Vec<CanonicalDiagram<f64>>, CanonicalDiagram<f64>) {
        let (p, c1, c2) = parent_child_diagrams();
        (vec![c1, c2], p)
    }

    #[test]
    fn fixture_map_is_valid() {
        let (children, parent) = parts();
        let refs: Vec<_> = children.iter().collect();
        let r = validate_aggregation(&refs, &parent_child_aggregation(), &parent);
        assert!(r.is_empty(), "{r}");
    }

    #[test]
    fn overlapping_block() {
        let (children, parent) = parts();
        let refs: Vec<_> = children.iter().collect();
        let map = parent_child_aggregation().block("P0", vec![vec!["S1", "S1"]]);
        let r = validate_aggregation(&refs, &map, &parent);
        assert!(r.has_code("blocks_not_disjoint"), "{r}");
    }

    #[test]
    fn reversed_blocks_give_witness() {
        let (children, parent) = parts();
        let refs: Vec<_> = children.iter().collect();
        let map = AggregationMap::new(vec!["C1".into(), "C2".into()])
            .block("P1", vec![vec!["S0", "S0"]])
            .block("P0", vec![vec!["S1", "S0"], vec!["S0", "S1"], vec!["S1", "S1"]]);
        let w = monotonicity_witnesses(&refs, &map, &parent);
        assert!(w.contains(&("(S0,S0)".to_owned(), "(S1,S1)".to_owned())), "{w:?}");
    }

    #[test]
    fn uncovered_combo() {
        let (children, parent) = parts();
        let refs: Vec<_> = children.iter().collect();
        let map = AggregationMap::new(vec!["C1".into(), "C2".into()])
            .block("P0", vec![vec!["S0", "S0"]])
            .block("P1", vec![vec!["S1", "S1"]]);
        let r = validate_aggregation(&refs, &map, &parent);
        assert!(r.violations.iter().any(|v| v.code == "combo_uncovered" && v.subjects == ["(S1,S0)"]), "{r}");
    }
}
