//! The assembled multilevel model and its inter-level consistency checks.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::aggregation::{combo_label, validate_aggregation, AggregationMap};
use super::HierarchyError;
use crate::diagram::{validate_canonical, Arc, CanonicalDiagram};
use crate::ids::{ArcId, DiagramId, StateId, SymbolId, Tick};
use crate::report::ValidationReport;
use crate::scalar::Scalar;
use crate::scenario::{ControlSymbol, SymbolClass};

/// Parent → child edges. Declaration order fixes child order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub edges: Vec<(DiagramId, DiagramId)>,
}

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn edge(mut self, parent: impl Into<DiagramId>, child: impl Into<DiagramId>) -> Self {
        self.edges.push((parent.into(), child.into()));
        self
    }

    pub fn children_of(&self, parent: &DiagramId) -> Vec<&DiagramId> {
        self.edges.iter().filter(|(p, _)| p == parent).map(|(_, c)| c).collect()
    }

    pub fn parent_of(&self, child: &DiagramId) -> Option<&DiagramId> {
        self.edges.iter().find(|(_, c)| c == child).map(|(p, _)| p)
    }
}

/// Number of fired child arcs that triggers upward propagation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quorum {
    #[default]
    All,
    AtLeast(usize),
}

/// A parent arc standing for the product of child arcs from distinct children.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoupledArc {
    pub parent: ArcId,
    pub children: Vec<ArcId>,
    /// Falls back to the rule's default when absent.
    pub quorum: Option<usize>,
}

impl CoupledArc {
    pub fn new(parent: impl Into<ArcId>, children: Vec<&str>, quorum: Option<usize>) -> Self {
        Self { parent: parent.into(), children: children.into_iter().map(ArcId::from).collect(), quorum }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterLevelRule {
    pub isolated: BTreeSet<ArcId>,
    pub coupled: BTreeSet<ArcId>,
    pub individual: BTreeSet<SymbolId>,
    pub general: BTreeSet<SymbolId>,
    pub default_quorum: Quorum,
}

impl InterLevelRule {
    /// Splits the forward arcs of `diagrams` by whether a coupling mentions
    /// them and the symbols by their declared class.
    pub fn derive<'a, T: Scalar + 'a>(
        diagrams: impl IntoIterator<Item = &'a CanonicalDiagram<T>>,
        couplings: &[CoupledArc],
        symbols: &[ControlSymbol<T>],
        default_quorum: Quorum,
    ) -> Self {
        let mentioned: BTreeSet<&ArcId> =
            couplings.iter().flat_map(|c| std::iter::once(&c.parent).chain(&c.children)).collect();
        let mut rule = InterLevelRule { default_quorum, ..Default::default() };
        for d in diagrams {
            for a in d.forward_arcs() {
                if mentioned.contains(&a.id) {
                    rule.coupled.insert(a.id.clone());
                } else {
                    rule.isolated.insert(a.id.clone());
                }
            }
        }
        for s in symbols {
            match s.class {
                SymbolClass::Individual => rule.individual.insert(s.id.clone()),
                SymbolClass::General => rule.general.insert(s.id.clone()),
            };
        }
        rule
    }

    pub fn quorum_for(&self, c: &CoupledArc) -> usize {
        let n = c.children.len();
        match (c.quorum, self.default_quorum) {
            (Some(q), _) => q,
            (None, Quorum::All) => n,
            (None, Quorum::AtLeast(q)) => q.min(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsgdModel<T> {
    pub name: String,
    pub levels: usize,
    pub diagrams: BTreeMap<DiagramId, CanonicalDiagram<T>>,
    pub topology: Topology,
    pub aggregations: BTreeMap<DiagramId, AggregationMap>,
    pub couplings: Vec<CoupledArc>,
    pub symbols: Vec<ControlSymbol<T>>,
    pub rule: InterLevelRule,
}

impl<T: Scalar> HsgdModel<T> {
    pub fn diagram(&self, id: &DiagramId) -> Option<&CanonicalDiagram<T>> {
        self.diagrams.get(id)
    }

    /// The diagram owning `arc` and the arc itself.
    pub fn locate_arc(&self, arc: &ArcId) -> Option<(&CanonicalDiagram<T>, &Arc)> {
        self.diagrams.values().find_map(|d| d.arc(arc).map(|a| (d, a)))
    }

    pub fn symbol(&self, id: &SymbolId) -> Option<&ControlSymbol<T>> {
        self.symbols.iter().find(|s| &s.id == id)
    }

    pub fn symbol_for_arc(&self, arc: &ArcId) -> Option<&ControlSymbol<T>> {
        self.symbols.iter().find(|s| &s.arc == arc)
    }

    pub fn coupling(&self, parent: &ArcId) -> Option<&CoupledArc> {
        self.couplings.iter().find(|c| &c.parent == parent)
    }

    pub fn quorum(&self, c: &CoupledArc) -> usize {
        self.rule.quorum_for(c)
    }

    pub fn max_horizon(&self) -> Tick {
        self.diagrams.values().map(|d| d.horizon()).max().unwrap_or(0)
    }

    /// Depth of `id` in the topology, roots at 0.
    pub fn level_of(&self, id: &DiagramId) -> usize {
        let mut depth = 0;
        let mut cur = id;
        while let Some(p) = self.topology.parent_of(cur) {
            depth += 1;
            cur = p;
            if depth > self.diagrams.len() {
                break;
            }
        }
        depth
    }

    /// Diagrams whose id set contains `state`.
    pub fn diagrams_with_state(&self, state: &StateId) -> Vec<&CanonicalDiagram<T>> {
        self.diagrams.values().filter(|d| d.has_state(state)).collect()
    }

    /// Arcs that count as coupled for complexness: coupling parents and
    /// their constituent child arcs.
    pub fn coupled_arcs(&self) -> BTreeSet<&ArcId> {
        self.couplings.iter().flat_map(|c| std::iter::once(&c.parent).chain(&c.children)).collect()
    }
}

/// Raw inputs of [`assemble`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParts<T> {
    pub name: String,
    pub diagrams: Vec<CanonicalDiagram<T>>,
    pub topology: Topology,
    pub aggregations: BTreeMap<DiagramId, AggregationMap>,
    pub couplings: Vec<CoupledArc>,
    pub symbols: Vec<ControlSymbol<T>>,
    pub default_quorum: Quorum,
}

impl<T> ModelParts<T> {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            diagrams: Vec::new(),
            topology: Topology::default(),
            aggregations: BTreeMap::new(),
            couplings: Vec::new(),
            symbols: Vec::new(),
            default_quorum: Quorum::All,
        }
    }
}

/// Depth of every diagram, or `None` when the topology is not a forest.
fn forest_depths(ids: &BTreeSet<&DiagramId>, topology: &Topology) -> Option<BTreeMap<DiagramId, usize>> {
    let mut parent: BTreeMap<&DiagramId, &DiagramId> = BTreeMap::new();
    for (p, c) in &topology.edges {
        if p == c || parent.insert(c, p).is_some_and(|prev| prev != p) {
            return None;
        }
    }
    let mut depths = BTreeMap::new();
    for id in ids {
        let mut depth = 0;
        let mut cur = *id;
        while let Some(p) = parent.get(cur) {
            depth += 1;
            cur = p;
            if depth > ids.len() {
                return None;
            }
        }
        depths.insert((*id).clone(), depth);
    }
    Some(depths)
}

/// Checks every coupling against the parent's aggregation map, the rule's
/// partitions and the symbol addressing.
pub fn validate_coupling<T: Scalar>(model: &HsgdModel<T>) -> ValidationReport {
    let mut r = ValidationReport::new();

    let mut owners: BTreeMap<&ArcId, Vec<&DiagramId>> = BTreeMap::new();
    for d in model.diagrams.values() {
        for a in &d.arcs {
            owners.entry(&a.id).or_default().push(&d.id);
        }
    }
    for (arc, ds) in &owners {
        if ds.len() > 1 {
            r.error("arc_id_reused", "arc id used in several diagrams", std::iter::once(arc.to_string()));
        }
    }

    let mut parents_seen = BTreeSet::new();
    for c in &model.couplings {
        let subject = c.parent.to_string();
        if !parents_seen.insert(&c.parent) {
            r.error("duplicate_coupling", "parent arc coupled twice", [subject.clone()]);
        }
        let Some((pd, pa)) = model.locate_arc(&c.parent) else {
            r.error("unknown_arc", "coupling parent arc not found", [subject]);
            continue;
        };
        if !pa.is_forward() {
            r.error("coupling_not_forward", "coupling parent arc must be forward", [subject.clone()]);
        }
        if c.children.is_empty() {
            r.error("coupling_empty", "coupling has no child arcs", [subject]);
            continue;
        }
        let q = model.quorum(c);
        if q == 0 || q > c.children.len() {
            r.error("quorum_range", format!("quorum {q} outside 1..={}", c.children.len()), [subject.clone()]);
        }

        let kids: BTreeSet<&DiagramId> = model.topology.children_of(&pd.id).into_iter().collect();
        let mut located = Vec::new();
        let mut used = BTreeSet::new();
        for ca in &c.children {
            let Some((cd, arc)) = model.locate_arc(ca) else {
                r.error("unknown_arc", "coupling child arc not found", [subject.clone(), ca.to_string()]);
                continue;
            };
            if !arc.is_forward() {
                r.error(
                    "coupling_not_forward",
                    "coupling child arc must be forward",
                    [subject.clone(), ca.to_string()],
                );
            }
            if !kids.contains(&cd.id) {
                r.error(
                    "coupling_not_child",
                    "coupling child arc is not in a child diagram",
                    [subject.clone(), ca.to_string()],
                );
                continue;
            }
            if !used.insert(&cd.id) {
                r.error(
                    "coupling_same_child",
                    "child arcs must come from distinct diagrams",
                    [subject.clone(), cd.id.to_string()],
                );
            }
            located.push((&cd.id, arc));
        }
        if located.len() != c.children.len() {
            continue;
        }
        let Some(map) = model.aggregations.get(&pd.id) else {
            r.error("missing_aggregation", "coupling parent diagram has no aggregation map", [pd.id.to_string()]);
            continue;
        };
        let positions: Option<Vec<(usize, &Arc)>> =
            located.iter().map(|(d, a)| map.position(d).map(|i| (i, *a))).collect();
        let Some(positions) = positions else {
            r.error("coupling_not_child", "coupling child diagram missing from aggregation map", [subject]);
            continue;
        };
        let mut any_source = false;
        for block in map.blocks.iter().filter(|b| b.parent_state == pa.source) {
            for combo in &block.combos {
                if !positions.iter().all(|(i, a)| combo.get(*i) == Some(&a.source)) {
                    continue;
                }
                any_source = true;
                let mut fired = combo.clone();
                for (i, a) in &positions {
                    fired[*i] = a.target.clone();
                }
                if map.parent_of(&fired) != Some(&pa.target) {
                    r.error(
                        "coupling_no_cross",
                        "coupling does not cross blocks",
                        [subject.clone(), combo_label(combo), combo_label(&fired)],
                    );
                }
            }
        }
        if !any_source {
            r.error("coupling_no_source", "coupling has no source combination in the aggregation map", [subject]);
        }
    }

    let coupling_parents: BTreeSet<&ArcId> = model.couplings.iter().map(|c| &c.parent).collect();
    let mut symbol_ids = BTreeSet::new();
    let mut addressed: BTreeMap<&ArcId, &SymbolId> = BTreeMap::new();
    for s in &model.symbols {
        if !symbol_ids.insert(&s.id) {
            r.error("duplicate_symbol", "duplicate symbol id", [s.id.to_string()]);
        }
        if s.cost < T::zero() {
            r.error("negative_cost", "symbol cost must be nonnegative", [s.id.to_string()]);
        }
        let Some((_, arc)) = model.locate_arc(&s.arc) else {
            r.error("unknown_arc", "symbol addresses unknown arc", [s.id.to_string(), s.arc.to_string()]);
            continue;
        };
        if !arc.is_forward() {
            r.error("symbol_not_forward", "symbol must address a forward arc", [s.id.to_string(), s.arc.to_string()]);
        }
        if let Some(prev) = addressed.insert(&s.arc, &s.id) {
            r.error(
                "symbol_not_bijective",
                "symbol-arc correspondence is not one-to-one",
                [prev.to_string(), s.id.to_string(), s.arc.to_string()],
            );
        }
        let is_parent = coupling_parents.contains(&s.arc);
        let consistent = match s.class {
            SymbolClass::General => is_parent,
            SymbolClass::Individual => !is_parent,
        };
        if !consistent {
            r.error("symbol_class_mismatch", "symbol class mismatch", [s.id.to_string(), s.arc.to_string()]);
        }
    }

    let derived =
        InterLevelRule::derive(model.diagrams.values(), &model.couplings, &model.symbols, model.rule.default_quorum);
    if derived != model.rule {
        r.error("rule_mismatch", "inter-level rule disagrees with the couplings and symbols", Vec::new());
    }
    r
}

/// Builds the model and returns it iff the topology is a forest, every
/// non-leaf has an aggregation map over exactly its children, every diagram
/// is valid and all aggregation and coupling checks pass.
pub fn assemble<T: Scalar>(parts: ModelParts<T>) -> Result<HsgdModel<T>, HierarchyError> {
    let mut r = ValidationReport::new();
    let mut diagrams = BTreeMap::new();
    for d in parts.diagrams {
        let dr = validate_canonical(&d);
        for mut v in dr.violations {
            v.subjects.insert(0, d.id.to_string());
            r.violations.push(v);
        }
        if diagrams.contains_key(&d.id) {
            r.error("duplicate_diagram", "duplicate diagram id", [d.id.to_string()]);
        }
        diagrams.insert(d.id.clone(), d);
    }
    let ids: BTreeSet<&DiagramId> = diagrams.keys().collect();
    for (p, c) in &parts.topology.edges {
        for id in [p, c] {
            if !ids.contains(id) {
                r.error("unknown_diagram", "topology references an undeclared diagram", [id.to_string()]);
            }
        }
    }
    let depths = forest_depths(&ids, &parts.topology);
    if depths.is_none() {
        r.error("not_forest", "topology not a forest", Vec::new());
    }
    for id in parts.aggregations.keys() {
        if !ids.contains(id) {
            r.error("unknown_diagram", "aggregation map for an undeclared diagram", [id.to_string()]);
        }
    }
    if !r.is_valid() {
        return Err(HierarchyError::AssemblyRejected(r));
    }

    for (id, d) in &diagrams {
        let kids = parts.topology.children_of(id);
        if kids.is_empty() {
            if parts.aggregations.contains_key(id) {
                r.error("leaf_aggregation", "leaf diagram has an aggregation map", [id.to_string()]);
            }
            continue;
        }
        let Some(map) = parts.aggregations.get(id) else {
            r.error("missing_aggregation", "missing aggregation map for a non-leaf diagram", [id.to_string()]);
            continue;
        };
        let declared: BTreeSet<&DiagramId> = kids.into_iter().collect();
        let mapped: BTreeSet<&DiagramId> = map.children.iter().collect();
        if declared != mapped || map.children.len() != mapped.len() {
            r.error("aggregation_children", "aggregation map children do not match the topology", [id.to_string()]);
            continue;
        }
        let children: Vec<&CanonicalDiagram<T>> = map.children.iter().map(|c| &diagrams[c]).collect();
        let ar = validate_aggregation(&children, map, d);
        for mut v in ar.violations {
            v.subjects.insert(0, id.to_string());
            r.violations.push(v);
        }
    }

    let rule = InterLevelRule::derive(diagrams.values(), &parts.couplings, &parts.symbols, parts.default_quorum);
    let levels = depths.expect("checked above").values().max().map_or(0, |d| d + 1);
    let model = HsgdModel {
        name: parts.name,
        levels,
        diagrams,
        topology: parts.topology,
        aggregations: parts.aggregations,
        couplings: parts.couplings,
        symbols: parts.symbols,
        rule,
    };
    r.extend(validate_coupling(&model));
    if r.is_valid() {
        Ok(model)
    } else {
        Err(HierarchyError::AssemblyRejected(r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{demo3_model, parent_child_parts};

    fn rejected(parts: ModelParts<f64>) -> ValidationReport {
        match assemble(parts) {
            Err(HierarchyError::AssemblyRejected(r)) => r,
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn parent_child_assembles_with_two_levels() {
        let m = assemble(parent_child_parts()).unwrap();
        assert_eq!(m.levels, 2);
        assert!(validate_coupling(&m).is_empty());
        assert_eq!(m.rule.coupled.len(), 3);
        assert_eq!(m.quorum(&m.couplings[0]), 2);
    }

    #[test]
    fn demo3_is_single_level() {
        assert_eq!(demo3_model().levels, 1);
    }

    #[test]
    fn cycle_is_rejected() {
        let mut parts = parent_child_parts();
        parts.topology = parts.topology.edge("C1", "P");
        assert!(rejected(parts).mentions("topology not a forest"));
    }

    #[test]
    fn missing_map_is_rejected() {
        let mut parts = parent_child_parts();
        parts.aggregations.clear();
        assert!(rejected(parts).mentions("missing aggregation map"));
    }

    #[test]
    fn coupling_inside_block() {
        let mut parts = parent_child_parts();
        // every combo but (S0,S0) maps to P0, so firing both children stays in P0's block
        parts.aggregations.insert(
            "P".into(),
            AggregationMap::new(vec!["C1".into(), "C2".into()])
                .block("P0", vec![vec!["S0", "S0"], vec!["S1", "S0"], vec!["S0", "S1"], vec!["S1", "S1"]]),
        );
        assert!(rejected(parts).mentions("coupling does not cross blocks"));
    }

    #[test]
    fn general_symbol_on_isolated_arc() {
        let mut parts = parent_child_parts();
        parts.symbols[0].class = SymbolClass::General;
        assert!(rejected(parts).mentions("symbol class mismatch"));
    }

    #[test]
    fn assembly_is_deterministic() {
        assert_eq!(assemble(parent_child_parts()).unwrap(), assemble(parent_child_parts()).unwrap());
    }
}
