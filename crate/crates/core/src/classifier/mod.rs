//! Ordered scales of interval propositions and the hierarchical classifier
//! built from them.
//!
//! A proposition is a conjunction of interval predicates, so its truth domain
//! is an axis-aligned box. Disjointness and refinement containment are
//! therefore decided exactly by interval arithmetic.

mod history;
mod profile;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagram::CanonicalDiagram;
use crate::ids::{PropositionId, StateId};
use crate::report::ValidationReport;
use crate::scalar::Scalar;

pub use history::{build_canonical_from_history, reestimate_state, History, HistoryError, ReestimateFlags};
pub use profile::{recognize_dynamics, DynamicsProfile, ProfileError, Trend};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClassifyError {
    #[error("parameter vector has {found} components, classifier expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("state {0} is not mapped by the classifier")]
    UnknownState(StateId),
}

/// `lower ≤ x[param] < upper`; a missing bound is unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate<T> {
    pub param: usize,
    pub lower: Option<T>,
    pub upper: Option<T>,
}

impl<T: Scalar> Predicate<T> {
    pub fn between(param: usize, lower: T, upper: T) -> Self {
        Self { param, lower: Some(lower), upper: Some(upper) }
    }

    pub fn at_least(param: usize, lower: T) -> Self {
        Self { param, lower: Some(lower), upper: None }
    }

    pub fn below(param: usize, upper: T) -> Self {
        Self { param, lower: None, upper: Some(upper) }
    }

    pub fn holds(&self, x: &[T]) -> bool {
        let v = x[self.param];
        self.lower.is_none_or(|lo| v >= lo) && self.upper.is_none_or(|hi| v < hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposition<T> {
    pub id: PropositionId,
    pub predicates: Vec<Predicate<T>>,
}

impl<T: Scalar> Proposition<T> {
    pub fn new(id: impl Into<PropositionId>, predicates: Vec<Predicate<T>>) -> Self {
        Self { id: id.into(), predicates }
    }

    pub fn holds(&self, x: &[T]) -> bool {
        self.predicates.iter().all(|p| p.holds(x))
    }

    pub fn truth_domain(&self, dimension: usize) -> TruthBox<T> {
        let mut b: TruthBox<T> = TruthBox::unbounded(dimension);
        for p in &self.predicates {
            if p.param >= dimension {
                continue;
            }
            let side = &mut b.sides[p.param];
            if let Some(lo) = p.lower {
                side.0 = Some(side.0.map_or(lo, |cur| cur.max_of(lo)));
            }
            if let Some(hi) = p.upper {
                side.1 = Some(side.1.map_or(hi, |cur| cur.min_of(hi)));
            }
        }
        b
    }
}

/// Half-open box `Π [lo_i, hi_i)`; `None` bounds are infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthBox<T> {
    pub sides: Vec<(Option<T>, Option<T>)>,
}

impl<T: Scalar> TruthBox<T> {
    pub fn unbounded(dimension: usize) -> Self {
        Self { sides: vec![(None, None); dimension] }
    }

    pub fn is_empty(&self) -> bool {
        self.sides.iter().any(|s| matches!(s, (Some(lo), Some(hi)) if lo >= hi))
    }

    pub fn intersect(&self, other: &Self) -> Self {
        let sides = self
            .sides
            .iter()
            .zip(&other.sides)
            .map(|(a, b)| {
                let lo = match (a.0, b.0) {
                    (Some(x), Some(y)) => Some(x.max_of(y)),
                    (x, None) => x,
                    (None, y) => y,
                };
                let hi = match (a.1, b.1) {
                    (Some(x), Some(y)) => Some(x.min_of(y)),
                    (x, None) => x,
                    (None, y) => y,
                };
                (lo, hi)
            })
            .collect();
        Self { sides }
    }

    pub fn is_subset_of(&self, outer: &Self) -> bool {
        if self.is_empty() {
            return true;
        }
        self.sides.iter().zip(&outer.sides).all(|(inner, outer)| {
            let lo_ok = match (inner.0, outer.0) {
                (_, None) => true,
                (None, Some(_)) => false,
                (Some(a), Some(b)) => a >= b,
            };
            let hi_ok = match (inner.1, outer.1) {
                (_, None) => true,
                (None, Some(_)) => false,
                (Some(a), Some(b)) => a <= b,
            };
            lo_ok && hi_ok
        })
    }
}

impl<T: Scalar> fmt::Display for TruthBox<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, (lo, hi)) in self.sides.iter().enumerate() {
            if lo.is_none() && hi.is_none() {
                continue;
            }
            if !first {
                f.write_str(" × ")?;
            }
            first = false;
            let lo = lo.map_or("-inf".to_owned(), |v| v.to_string());
            let hi = hi.map_or("inf".to_owned(), |v| v.to_string());
            write!(f, "p{i}∈[{lo},{hi})")?;
        }
        if first {
            f.write_str("everywhere")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleEntry<T> {
    pub proposition: Proposition<T>,
    pub state: StateId,
    /// Rank of the mapped state in its diagram.
    pub state_rank: u32,
}

/// Propositions listed in increasing order `K1 < … < Kn`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scale<T> {
    pub entries: Vec<ScaleEntry<T>>,
}

impl<T: Scalar> Scale<T> {
    pub fn new(entries: Vec<ScaleEntry<T>>) -> Self {
        Self { entries }
    }

    /// Maps each proposition to the state of the same ordinal position.
    pub fn from_propositions(props: Vec<(Proposition<T>, StateId)>) -> Self {
        Self {
            entries: props
                .into_iter()
                .enumerate()
                .map(|(i, (proposition, state))| ScaleEntry { proposition, state, state_rank: i as u32 })
                .collect(),
        }
    }

    fn matching(&self, x: &[T]) -> Option<&ScaleEntry<T>> {
        self.entries.iter().find(|e| e.proposition.holds(x))
    }

    /// Number of parameters referenced by the scale's predicates.
    pub fn min_dimension(&self) -> usize {
        self.entries.iter().flat_map(|e| e.proposition.predicates.iter().map(|p| p.param + 1)).max().unwrap_or(0)
    }
}

/// Checks disjointness of truth domains and agreement between proposition order
/// and state order.
pub fn validate_scale<T: Scalar>(scale: &Scale<T>) -> ValidationReport {
    validate_scale_in(scale, scale.min_dimension())
}

fn validate_scale_in<T: Scalar>(scale: &Scale<T>, dimension: usize) -> ValidationReport {
    let mut r = ValidationReport::new();
    let mut ids = BTreeSet::new();
    let boxes: Vec<_> = scale.entries.iter().map(|e| e.proposition.truth_domain(dimension)).collect();
    for (e, b) in scale.entries.iter().zip(&boxes) {
        let pid = e.proposition.id.to_string();
        if !ids.insert(&e.proposition.id) {
            r.error("duplicate-proposition", "duplicate proposition id", [pid.clone()]);
        }
        for p in &e.proposition.predicates {
            if p.lower.is_none() && p.upper.is_none() {
                r.error("predicate-bounds", "predicate has no bound", [pid.clone()]);
            }
            if p.param >= dimension {
                r.error(
                    "predicate-param",
                    format!("predicate on p{} outside dimension {dimension}", p.param),
                    [pid.clone()],
                );
            }
        }
        if b.is_empty() {
            r.error("empty-domain", "truth domain is empty", [pid.clone()]);
        }
    }
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            let overlap = boxes[i].intersect(&boxes[j]);
            if !overlap.is_empty() && !boxes[i].is_empty() && !boxes[j].is_empty() {
                r.error(
                    "overlap",
                    format!("truth domains overlap on {overlap}"),
                    [scale.entries[i].proposition.id.to_string(), scale.entries[j].proposition.id.to_string()],
                );
            }
        }
    }
    for w in scale.entries.windows(2) {
        if w[0].state_rank >= w[1].state_rank {
            r.error(
                "order-mismatch",
                "order mismatch between propositions and states",
                [w[0].proposition.id.to_string(), w[1].proposition.id.to_string()],
            );
        }
    }
    r
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Classification {
    State(StateId),
    Unclassified,
}

impl Classification {
    pub fn state(&self) -> Option<&StateId> {
        match self {
            Classification::State(s) => Some(s),
            Classification::Unclassified => None,
        }
    }
}

/// A root scale plus hierarchical continuations of some of its propositions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier<T> {
    pub dimension: usize,
    pub root: Scale<T>,
    pub refinements: BTreeMap<PropositionId, Scale<T>>,
}

impl<T: Scalar> Classifier<T> {
    pub fn single(dimension: usize, root: Scale<T>) -> Self {
        Self { dimension, root, refinements: BTreeMap::new() }
    }

    pub fn refine(mut self, parent: impl Into<PropositionId>, child: Scale<T>) -> Self {
        self.refinements.insert(parent.into(), child);
        self
    }

    /// Every scale entry, root first then refinements in key order.
    pub fn entries(&self) -> impl Iterator<Item = &ScaleEntry<T>> {
        self.root.entries.iter().chain(self.refinements.values().flat_map(|s| s.entries.iter()))
    }

    pub fn rank_of(&self, state: &StateId) -> Option<u32> {
        self.entries().find(|e| &e.state == state).map(|e| e.state_rank)
    }

    pub fn states(&self) -> BTreeSet<StateId> {
        self.entries().map(|e| e.state.clone()).collect()
    }

    fn proposition(&self, id: &PropositionId) -> Option<&Proposition<T>> {
        self.entries().map(|e| &e.proposition).find(|p| &p.id == id)
    }

    /// Greedy descent: the deepest proposition holding for `x` decides.
    pub fn classify(&self, x: &[T]) -> Result<Classification, ClassifyError> {
        if x.len() != self.dimension {
            return Err(ClassifyError::DimensionMismatch { expected: self.dimension, found: x.len() });
        }
        let Some(mut current) = self.root.matching(x) else {
            return Ok(Classification::Unclassified);
        };
        let mut depth = 0;
        while let Some(child) = self.refinements.get(&current.proposition.id) {
            match child.matching(x) {
                Some(next) => current = next,
                None => break,
            }
            depth += 1;
            if depth > self.refinements.len() {
                break;
            }
        }
        Ok(Classification::State(current.state.clone()))
    }
}

/// Validates every scale, refinement containment, the tree shape of the
/// refinement graph, and warns about the size bounds on predicates and
/// propositions.
pub fn validate_classifier<T: Scalar>(c: &Classifier<T>) -> ValidationReport {
    let mut r = validate_scale_in(&c.root, c.dimension);
    let mut seen: BTreeSet<&PropositionId> = c.root.entries.iter().map(|e| &e.proposition.id).collect();
    for (parent, child) in &c.refinements {
        r.extend(validate_scale_in(child, c.dimension));
        let Some(parent_prop) = c.proposition(parent) else {
            r.error("refine-unknown", "refinement of unknown proposition", [parent.to_string()]);
            continue;
        };
        let outer = parent_prop.truth_domain(c.dimension);
        for e in &child.entries {
            if !seen.insert(&e.proposition.id) {
                r.error("refine-tree", "refinement graph is not a tree", [e.proposition.id.to_string()]);
            }
            if !e.proposition.truth_domain(c.dimension).is_subset_of(&outer) {
                r.error(
                    "refine-escape",
                    "refinement escapes the parent truth domain",
                    [parent.to_string(), e.proposition.id.to_string()],
                );
            }
        }
    }
    let distinct: BTreeSet<String> = c
        .entries()
        .flat_map(|e| e.proposition.predicates.iter())
        .map(|p| format!("{}:{:?}:{:?}", p.param, p.lower, p.upper))
        .collect();
    if distinct.len() > c.dimension {
        r.warning(
            "predicate-count",
            format!("{} distinct predicates exceed the {} parameters", distinct.len(), c.dimension),
            [],
        );
    }
    r
}

/// Warns when a scale lists more propositions than the diagram has states.
pub fn validate_classifier_for<T: Scalar>(c: &Classifier<T>, diagram: &CanonicalDiagram<T>) -> ValidationReport {
    let mut r = validate_classifier(c);
    if c.root.entries.len() > diagram.states.len() {
        r.warning("scale-size", "scale has more propositions than the diagram has states", [diagram.id.to_string()]);
    }
    for e in c.entries() {
        if let Some(rank) = diagram.rank(&e.state) {
            if rank != e.state_rank {
                r.error("scale-rank", "scale rank differs from diagram rank", [e.state.to_string()]);
            }
        }
    }
    r
}

/// Rows are parameters, columns are classes (states); a cell names the
/// proposition constraining that parameter for that class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationMatrix {
    pub parameters: Vec<usize>,
    pub classes: Vec<StateId>,
    pub cells: BTreeMap<(usize, StateId), PropositionId>,
}

impl ClassificationMatrix {
    pub fn from_classifier<T: Scalar>(c: &Classifier<T>) -> Self {
        let mut cells = BTreeMap::new();
        let mut classes = Vec::new();
        for e in c.entries() {
            if !classes.contains(&e.state) {
                classes.push(e.state.clone());
            }
            for p in &e.proposition.predicates {
                cells.insert((p.param, e.state.clone()), e.proposition.id.clone());
            }
        }
        Self { parameters: (0..c.dimension).collect(), classes, cells }
    }

    pub fn validate<T: Scalar>(&self, c: &Classifier<T>) -> ValidationReport {
        let mut r = ValidationReport::new();
        for ((param, class), rule) in &self.cells {
            if c.proposition(rule).is_none() {
                r.error(
                    "matrix-rule",
                    "matrix cell references unknown rule",
                    [format!("p{param}/{class}"), rule.to_string()],
                );
            }
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::*;
    use proptest::prelude::*;

    fn interval(id: &str, lo: f64, hi: f64, state: &str) -> (Proposition<f64>, StateId) {
        (Proposition::new(id, vec![Predicate::between(0, lo, hi)]), state.into())
    }

    #[test]
    fn disjoint_scale_is_valid() {
        let s = Scale::from_propositions(vec![interval("p1", 0.0, 1.0, "S0"), interval("p2", 1.0, 2.0, "S1")]);
        assert!(validate_scale(&s).is_empty());
    }

    #[test]
    fn overlap_is_located() {
        let s = Scale::from_propositions(vec![interval("p1", 0.0, 1.5, "S0"), interval("p2", 1.0, 2.0, "S1")]);
        let r = validate_scale(&s);
        assert!(r.mentions("overlap on p0∈[1,1.5)"), "{r}");
    }

    #[test]
    fn order_mismatch() {
        let mut s = Scale::from_propositions(vec![interval("p1", 0.0, 1.0, "S2"), interval("p2", 1.0, 2.0, "S1")]);
        s.entries[0].state_rank = 2;
        s.entries[1].state_rank = 1;
        assert!(validate_scale(&s).mentions("order mismatch"));
    }

    #[test]
    fn classify_examples() {
        let c = demo3_classifier();
        assert_eq!(c.classify(&[15.0]).unwrap(), Classification::State("S1".into()));
        let gap = Classifier::single(
            1,
            Scale::from_propositions(vec![
                (Proposition::new("A", vec![Predicate::between(0, 0.0, 10.0)]), "S0".into()),
                (Proposition::new("B", vec![Predicate::at_least(0, 10.0)]), "S1".into()),
            ]),
        );
        assert_eq!(gap.classify(&[-5.0]).unwrap(), Classification::Unclassified);
        assert_eq!(c.classify(&[1.0, 2.0]), Err(ClassifyError::DimensionMismatch { expected: 1, found: 2 }));
    }

    #[test]
    fn two_level_descent() {
        let child = Scale::new(vec![
            ScaleEntry {
                proposition: Proposition::new("K1a", vec![Predicate::between(0, 10.0, 15.0)]),
                state: "S1a".into(),
                state_rank: 1,
            },
            ScaleEntry {
                proposition: Proposition::new("K1b", vec![Predicate::between(0, 15.0, 20.0)]),
                state: "S1b".into(),
                state_rank: 2,
            },
        ]);
        let c = demo3_classifier().refine("K1", child);
        assert!(validate_classifier(&c).is_valid());
        assert_eq!(c.classify(&[17.0]).unwrap(), Classification::State("S1b".into()));
        assert_eq!(c.classify(&[12.0]).unwrap(), Classification::State("S1a".into()));
        assert_eq!(c.classify(&[25.0]).unwrap(), Classification::State("S2".into()));
    }

    #[test]
    fn refinement_must_stay_inside_parent() {
        let child = Scale::from_propositions(vec![interval("K1x", 5.0, 12.0, "S1x")]);
        let c = demo3_classifier().refine("K1", child);
        assert!(validate_classifier(&c).mentions("escapes"));
    }

    #[test]
    fn matrix_references_rules() {
        let c = demo3_classifier();
        let m = ClassificationMatrix::from_classifier(&c);
        assert_eq!(m.cells[&(0, StateId::from("S1"))], PropositionId::from("K1"));
        assert!(m.validate(&c).is_empty());
        let mut bad = m.clone();
        bad.cells.insert((0, "S9".into()), "K9".into());
        assert!(!bad.validate(&c).is_empty());
    }

    proptest! {
        #[test]
        fn valid_scales_match_at_most_once(cuts in proptest::collection::btree_set(-50i32..50, 2..8), x in -60.0f64..60.0) {
            let cuts: Vec<f64> = cuts.into_iter().map(f64::from).collect();
            let props = cuts.windows(2).enumerate()
                .map(|(i, w)| interval(&format!("k{i}"), w[0], w[1], &format!("S{i}")))
                .collect();
            let s = Scale::from_propositions(props);
            prop_assert!(validate_scale(&s).is_empty());
            let hits = s.entries.iter().filter(|e| e.proposition.holds(&[x])).count();
            prop_assert!(hits <= 1);
            let c = Classifier::single(1, s);
            prop_assert_eq!(c.classify(&[x]).unwrap(), c.classify(&[x]).unwrap());
        }
    }
}
