//! Objectives tree: goal decomposition with all/any/k-of-n links.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::PlannerError;
use crate::hierarchy::HsgdModel;
use crate::ids::{DiagramId, NodeId, StateId};
use crate::report::ValidationReport;
use crate::scalar::Scalar;
use crate::scenario::Trajectory;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub diagram: DiagramId,
    pub state: StateId,
}

/// How an internal node combines its children.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeRule {
    All,
    Any,
    KOfN(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectiveNode {
    pub id: NodeId,
    /// Leaves carry a goal; internal nodes may too, but it is not consulted.
    pub goal: Option<Goal>,
    pub rule: NodeRule,
    pub children: Vec<NodeId>,
}

impl ObjectiveNode {
    pub fn leaf(id: impl Into<NodeId>, diagram: impl Into<DiagramId>, state: impl Into<StateId>) -> Self {
        Self {
            id: id.into(),
            goal: Some(Goal { diagram: diagram.into(), state: state.into() }),
            rule: NodeRule::All,
            children: Vec::new(),
        }
    }

    pub fn internal(id: impl Into<NodeId>, rule: NodeRule, children: Vec<&str>) -> Self {
        Self { id: id.into(), goal: None, rule, children: children.into_iter().map(NodeId::from).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectivesTree {
    pub root: NodeId,
    pub nodes: Vec<ObjectiveNode>,
}

impl ObjectivesTree {
    pub fn node(&self, id: &NodeId) -> Option<&ObjectiveNode> {
        self.nodes.iter().find(|n| &n.id == id)
    }
}

/// Single root, every node reached exactly once from it, every child
/// declared, leaves carry goals on existing states.
pub fn validate_objectives<T: Scalar>(tree: &ObjectivesTree, model: &HsgdModel<T>) -> ValidationReport {
    let mut r = ValidationReport::new();
    let mut ids = BTreeSet::new();
    for n in &tree.nodes {
        if !ids.insert(&n.id) {
            r.error("duplicate_node", "duplicate objective node", [n.id.to_string()]);
        }
    }
    if tree.node(&tree.root).is_none() {
        r.error("unknown_node", "root node not declared", [tree.root.to_string()]);
        return r;
    }
    let mut seen = BTreeSet::new();
    let mut stack = vec![&tree.root];
    while let Some(id) = stack.pop() {
        if !seen.insert(id) {
            r.error("not_tree", "objective node reached twice", [id.to_string()]);
            continue;
        }
        let Some(n) = tree.node(id) else {
            r.error("unknown_node", "child node not declared", [id.to_string()]);
            continue;
        };
        if n.children.is_empty() {
            match &n.goal {
                None => r.error("leaf_goal", "leaf node has no goal", [id.to_string()]),
                Some(g) if !model.diagram(&g.diagram).is_some_and(|d| d.has_state(&g.state)) => r.error(
                    "unknown_goal",
                    "goal references unknown diagram or state",
                    [id.to_string(), g.state.to_string()],
                ),
                _ => {}
            }
        }
        if let NodeRule::KOfN(k) = n.rule {
            if k == 0 || k > n.children.len().max(1) {
                r.error("k_of_n", "k-of-n needs 1 ≤ k ≤ number of children", [id.to_string()]);
            }
        }
        stack.extend(n.children.iter());
    }
    for n in &tree.nodes {
        if !seen.contains(&n.id) {
            r.error("not_tree", "objective node unreachable from the root", [n.id.to_string()]);
        }
    }
    r
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectivesReport {
    pub achieved: BTreeMap<NodeId, bool>,
    pub root_achieved: bool,
    /// Leaves whose goal was not met, in tree order.
    pub unmet_leaves: Vec<NodeId>,
}

fn eval_node<T: Scalar>(
    tree: &ObjectivesTree,
    model: &HsgdModel<T>,
    trajectory: &Trajectory,
    id: &NodeId,
    report: &mut ObjectivesReport,
    depth: usize,
) -> Result<bool, PlannerError> {
    let node = tree.node(id).filter(|_| depth <= tree.nodes.len());
    let Some(node) = node else { return Ok(false) };
    let achieved = if node.children.is_empty() {
        let goal = node.goal.as_ref().ok_or_else(|| PlannerError::UnknownGoalState(StateId(String::new())))?;
        let d = model
            .diagram(&goal.diagram)
            .filter(|d| d.has_state(&goal.state))
            .ok_or_else(|| PlannerError::UnknownGoalState(goal.state.clone()))?;
        let occ = trajectory.dynamics(&d.id).map_or(0, |dy| dy.occupancy_at(&goal.state, trajectory.horizon));
        let ok = occ == d.population;
        if !ok {
            report.unmet_leaves.push(node.id.clone());
        }
        ok
    } else {
        let mut hits = 0;
        for c in &node.children {
            if eval_node(tree, model, trajectory, c, report, depth + 1)? {
                hits += 1;
            }
        }
        match node.rule {
            NodeRule::All => hits == node.children.len(),
            NodeRule::Any => hits > 0,
            NodeRule::KOfN(k) => hits >= k,
        }
    };
    report.achieved.insert(node.id.clone(), achieved);
    Ok(achieved)
}

/// A leaf is achieved when its goal state holds the diagram's whole
/// population at the end of the trajectory.
pub fn check_objectives<T: Scalar>(
    tree: &ObjectivesTree,
    model: &HsgdModel<T>,
    trajectory: &Trajectory,
) -> Result<ObjectivesReport, PlannerError> {
    let mut report = ObjectivesReport { achieved: BTreeMap::new(), root_achieved: false, unmet_leaves: Vec::new() };
    report.root_achieved = eval_node(tree, model, trajectory, &tree.root, &mut report, 0)?;
    Ok(report)
}
