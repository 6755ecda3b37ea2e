//! Canonical templates: a diagram skeleton with named initial values and
//! named structure rewrites.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagram::{validate_canonical, Arc, ArcKind, CanonicalDiagram, StateNode};
use crate::ids::{ArcId, StateId, SymbolId, Tick};
use crate::report::ValidationReport;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("override {0} is not a declared initial value")]
    InvalidOverride(String),
    #[error("unknown transform {0}")]
    UnknownTransform(String),
    #[error("transform {name} breaks the state order: {reason}")]
    TransformBreaksOrder { name: String, reason: String },
    #[error("instantiated diagram is invalid:\n{0}")]
    Invalid(ValidationReport),
}

/// Order-preserving structure rewrites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Transform {
    AddState { state: StateNode },
    RemoveState { state: StateId },
    AddArc { arc: Arc },
    RemoveArc { arc: ArcId },
    SetTheta { arc: ArcId, theta: Tick },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalTemplate<T> {
    pub structure: CanonicalDiagram<T>,
    /// Behaviour rule, kept as text.
    pub behavior: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub controls: Vec<SymbolId>,
    /// Declared initial values: `population`, `theta.<arc>`, `dwell.<state>`.
    pub initial_values: BTreeMap<String, u64>,
    pub transforms: BTreeMap<String, Transform>,
}

impl<T: Scalar> CanonicalTemplate<T> {
    /// A template whose initial values restate the skeleton as given.
    pub fn from_diagram(structure: CanonicalDiagram<T>) -> Self {
        let mut iv = BTreeMap::new();
        iv.insert("population".to_owned(), structure.population);
        for a in structure.forward_arcs() {
            iv.insert(format!("theta.{}", a.id), u64::from(a.theta));
        }
        for s in &structure.states {
            if let Some(l) = s.dwell_limit {
                iv.insert(format!("dwell.{}", s.id), u64::from(l));
            }
        }
        Self {
            structure,
            behavior: String::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            controls: Vec::new(),
            initial_values: iv,
            transforms: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateOverrides {
    pub values: BTreeMap<String, u64>,
    /// Transform names, applied in order before validation.
    pub apply: Vec<String>,
}

fn set_value<T: Scalar>(d: &mut CanonicalDiagram<T>, key: &str, value: u64) -> Result<(), TemplateError> {
    let bad = || TemplateError::InvalidOverride(key.to_owned());
    let as_tick = || Tick::try_from(value).map_err(|_| bad());
    if key == "population" {
        d.population = value;
    } else if let Some(arc) = key.strip_prefix("theta.") {
        let t = as_tick()?;
        d.arcs.iter_mut().find(|a| a.id.as_str() == arc).ok_or_else(bad)?.theta = t;
    } else if let Some(state) = key.strip_prefix("dwell.") {
        let t = as_tick()?;
        d.states.iter_mut().find(|s| s.id.as_str() == state).ok_or_else(bad)?.dwell_limit = Some(t);
    } else {
        return Err(bad());
    }
    Ok(())
}

fn apply_transform<T: Scalar>(d: &mut CanonicalDiagram<T>, name: &str, t: &Transform) -> Result<(), TemplateError> {
    let breaks =
        |reason: &str| TemplateError::TransformBreaksOrder { name: name.to_owned(), reason: reason.to_owned() };
    match t {
        Transform::AddState { state } => {
            if d.has_state(&state.id) {
                return Err(breaks("state already exists"));
            }
            if d.states.iter().any(|s| s.rank == state.rank) {
                return Err(breaks("rank already taken"));
            }
            d.states.push(state.clone());
        }
        Transform::RemoveState { state } => {
            if state == &d.initial || state == &d.final_state {
                return Err(breaks("initial and final states cannot be removed"));
            }
            d.states.retain(|s| &s.id != state);
            d.arcs.retain(|a| &a.source != state && &a.target != state);
            for mu in &mut d.mu {
                mu.0.remove(state);
            }
        }
        Transform::AddArc { arc } => {
            let (Some(rs), Some(rt)) = (d.rank(&arc.source), d.rank(&arc.target)) else {
                return Err(breaks("arc references unknown state"));
            };
            let ordered = match arc.kind {
                ArcKind::Forward => rs < rt,
                ArcKind::Backstep => rt <= rs,
            };
            if !ordered {
                return Err(breaks("arc direction contradicts the ranks"));
            }
            d.arcs.push(arc.clone());
        }
        Transform::RemoveArc { arc } => {
            let before = d.arcs.len();
            d.arcs.retain(|a| &a.id != arc);
            if d.arcs.len() == before {
                return Err(breaks("arc not present"));
            }
        }
        Transform::SetTheta { arc, theta } => {
            let a = d.arcs.iter_mut().find(|a| &a.id == arc).ok_or_else(|| breaks("arc not present"))?;
            if (a.kind == ArcKind::Forward) != (*theta > 0) {
                return Err(breaks("transit time contradicts the arc kind"));
            }
            a.theta = *theta;
        }
    }
    Ok(())
}

/// Applies the template's initial values, then `overrides`, then the named
/// transforms, and validates the result.
pub fn instantiate_template<T: Scalar>(
    template: &CanonicalTemplate<T>,
    overrides: &TemplateOverrides,
) -> Result<CanonicalDiagram<T>, TemplateError> {
    let mut d = template.structure.clone();
    for (k, v) in &template.initial_values {
        set_value(&mut d, k, *v)?;
    }
    for (k, v) in &overrides.values {
        if !template.initial_values.contains_key(k) {
            return Err(TemplateError::InvalidOverride(k.clone()));
        }
        set_value(&mut d, k, *v)?;
    }
    for name in &overrides.apply {
        let t = template.transforms.get(name).ok_or_else(|| TemplateError::UnknownTransform(name.clone()))?;
        apply_transform(&mut d, name, t)?;
    }
    let report = validate_canonical(&d);
    if report.is_valid() {
        Ok(d)
    } else {
        Err(TemplateError::Invalid(report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::demo3;

    fn template() -> CanonicalTemplate<f64> {
        let mut t = CanonicalTemplate::from_diagram(demo3());
        t.transforms.insert("remove arc a12".into(), Transform::RemoveArc { arc: "a12".into() });
        t.transforms.insert("flip".into(), Transform::AddArc { arc: Arc::forward("bad", "S2", "S0", 1) });
        t
    }

    #[test]
    fn identity_instantiation() {
        assert_eq!(instantiate_template(&template(), &TemplateOverrides::default()).unwrap(), demo3());
    }

    #[test]
    fn population_override() {
        let ov = TemplateOverrides { values: [("population".to_owned(), 10)].into(), apply: vec![] };
        let d = instantiate_template(&template(), &ov).unwrap();
        assert_eq!(d.population, 10);
        assert_eq!(d.arcs, demo3().arcs);
    }

    #[test]
    fn undeclared_override() {
        let ov = TemplateOverrides { values: [("dwell.S1".to_owned(), 2)].into(), apply: vec![] };
        assert_eq!(instantiate_template(&template(), &ov), Err(TemplateError::InvalidOverride("dwell.S1".into())));
    }

    #[test]
    fn removing_arc_strands_final_state() {
        let ov = TemplateOverrides { values: BTreeMap::new(), apply: vec!["remove arc a12".into()] };
        match instantiate_template(&template(), &ov) {
            Err(TemplateError::Invalid(r)) => assert!(r.mentions("unreachable"), "{r}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reversed_arc_breaks_order() {
        let ov = TemplateOverrides { values: BTreeMap::new(), apply: vec!["flip".into()] };
        assert!(matches!(instantiate_template(&template(), &ov), Err(TemplateError::TransformBreaksOrder { .. })));
    }
}
