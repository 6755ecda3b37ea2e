//! State re-estimation `S(t) = F(S(t-1), X(t-1), X(t))` and construction of a
//! canonical diagram from classified object histories.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Classification, Classifier, ClassifyError};
use crate::diagram::{validate_canonical, Arc, CanonicalDiagram, Distribution, StateNode, TimePartition};
use crate::ids::{DiagramId, StateId, Tick};
use crate::report::ValidationReport;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReestimateFlags {
    /// No proposition matched; the previous state was kept.
    pub gap_hold: bool,
    /// The estimate moved more than one rank.
    pub rank_jump: bool,
}

/// Re-estimates the state of one object from its previous state and the
/// previous and current parameter vectors.
pub fn reestimate_state<T: Scalar>(
    prev_state: &StateId,
    prev_params: &[T],
    cur_params: &[T],
    classifier: &Classifier<T>,
) -> Result<(StateId, ReestimateFlags), ClassifyError> {
    let prev_rank = classifier.rank_of(prev_state).ok_or_else(|| ClassifyError::UnknownState(prev_state.clone()))?;
    if prev_params.len() != classifier.dimension {
        return Err(ClassifyError::DimensionMismatch { expected: classifier.dimension, found: prev_params.len() });
    }
    match classifier.classify(cur_params)? {
        Classification::Unclassified => Ok((prev_state.clone(), ReestimateFlags { gap_hold: true, rank_jump: false })),
        Classification::State(s) => {
            let rank = classifier.rank_of(&s).expect("classified state is mapped");
            let rank_jump = rank.abs_diff(prev_rank) > 1;
            Ok((s, ReestimateFlags { gap_hold: false, rank_jump }))
        }
    }
}

/// Parameter samples of one object keyed by tick.
pub type History<T> = BTreeMap<Tick, Vec<T>>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HistoryError {
    #[error("no histories given")]
    NoObjects,
    #[error("object {object} has no sample at boundary tick {tick}")]
    UnsampledBoundary { object: String, tick: Tick },
    #[error("object {object} is unclassified at its first sample (tick {tick})")]
    UnclassifiedStart { object: String, tick: Tick },
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

/// Classifies each object's samples in tick order with [`reestimate_state`].
pub(crate) fn classify_history<T: Scalar>(
    object: &str,
    history: &History<T>,
    classifier: &Classifier<T>,
) -> Result<Vec<(Tick, StateId)>, HistoryError> {
    let mut out = Vec::with_capacity(history.len());
    let mut prev: Option<(&Vec<T>, StateId)> = None;
    for (&tick, params) in history {
        let state = match &prev {
            None => match classifier.classify(params)? {
                Classification::State(s) => s,
                Classification::Unclassified => {
                    return Err(HistoryError::UnclassifiedStart { object: object.to_owned(), tick })
                }
            },
            Some((pp, ps)) => reestimate_state(ps, pp, params, classifier)?.0,
        };
        out.push((tick, state.clone()));
        prev = Some((params, state));
    }
    Ok(out)
}

/// Builds a canonical diagram from the classified histories: observed states
/// ordered by classifier rank, an arc for every observed consecutive change
/// (forward when the rank rises, backstep otherwise), and `μi` equal to the
/// observed distribution at each boundary. The returned report is the
/// diagram's own validation, which may flag unreachable states.
pub fn build_canonical_from_history<T: Scalar>(
    id: impl Into<DiagramId>,
    histories: &BTreeMap<String, History<T>>,
    classifier: &Classifier<T>,
    partition: &TimePartition,
) -> Result<(CanonicalDiagram<T>, ValidationReport), HistoryError> {
    if histories.is_empty() {
        return Err(HistoryError::NoObjects);
    }
    for (object, h) in histories {
        for &tick in &partition.boundaries {
            if !h.contains_key(&tick) {
                return Err(HistoryError::UnsampledBoundary { object: object.clone(), tick });
            }
        }
    }

    let mut sequences = BTreeMap::new();
    for (object, h) in histories {
        sequences.insert(object.as_str(), classify_history(object, h, classifier)?);
    }

    let rank = |s: &StateId| classifier.rank_of(s).expect("classified state is mapped");
    let n = partition.interval_count() as u32;
    let mut first_level: BTreeMap<StateId, u32> = BTreeMap::new();
    let mut transitions: BTreeSet<(StateId, StateId)> = BTreeSet::new();
    for seq in sequences.values() {
        for (tick, s) in seq {
            let level = if *tick == 0 { 0 } else { (partition.interval_of(*tick) as u32).min(n) };
            first_level.entry(s.clone()).and_modify(|l| *l = (*l).min(level)).or_insert(level);
        }
        for w in seq.windows(2) {
            if w[0].1 != w[1].1 {
                transitions.insert((w[0].1.clone(), w[1].1.clone()));
            }
        }
    }

    let mut observed: Vec<StateId> = first_level.keys().cloned().collect();
    observed.sort_by_key(|s| (rank(s), s.clone()));
    // a state's group may not come after any higher-ranked state's group
    let mut states = Vec::with_capacity(observed.len());
    let mut running = n;
    for s in observed.iter().rev() {
        running = running.min(first_level[s]);
        states.push(StateNode::new(s.clone(), rank(s), running));
    }
    states.reverse();

    let arcs = transitions
        .iter()
        .map(|(a, b)| {
            let id = format!("{a}->{b}");
            if rank(b) > rank(a) {
                Arc::forward(id, a.clone(), b.clone(), 1)
            } else {
                Arc::backstep(id, a.clone(), b.clone())
            }
        })
        .collect();

    let pop = histories.len() as u64;
    let mu = partition
        .boundaries
        .iter()
        .map(|&tick| {
            let mut counts: BTreeMap<StateId, u64> = BTreeMap::new();
            for seq in sequences.values() {
                let s = &seq.iter().find(|(t, _)| *t == tick).expect("boundary sampled").1;
                *counts.entry(s.clone()).or_default() += 1;
            }
            Distribution(counts.into_iter().map(|(s, c)| (s, T::from_count(c) / T::from_count(pop))).collect())
        })
        .collect::<Vec<_>>();

    let initial = mu[0].0.keys().min_by_key(|s| (rank(s), (*s).clone())).cloned().expect("at least one object");
    let final_state = observed.last().cloned().expect("at least one state");

    let diagram = CanonicalDiagram {
        id: id.into(),
        partition: partition.clone(),
        states,
        arcs,
        initial,
        final_state,
        mu,
        population: pop,
    };
    let report = validate_canonical(&diagram);
    Ok((diagram, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::ArcKind;
    use crate::fixtures::demo3_classifier;

    fn sid(s: &str) -> StateId {
        StateId::from(s)
    }

    fn hist(values: &[(Tick, f64)]) -> History<f64> {
        values.iter().map(|&(t, v)| (t, vec![v])).collect()
    }

    #[test]
    fn reestimate_cases() {
        let c = demo3_classifier();
        assert_eq!(
            reestimate_state(&sid("S1"), &[12.0], &[13.0], &c).unwrap(),
            (sid("S1"), ReestimateFlags::default())
        );
        assert_eq!(
            reestimate_state(&sid("S0"), &[1.0], &[25.0], &c).unwrap(),
            (sid("S2"), ReestimateFlags { gap_hold: false, rank_jump: true })
        );
        assert!(matches!(reestimate_state(&sid("S9"), &[1.0], &[1.0], &c), Err(ClassifyError::UnknownState(_))));
    }

    #[test]
    fn gap_holds_previous_state() {
        let c = Classifier::single(
            1,
            crate::classifier::Scale::from_propositions(vec![
                (
                    crate::classifier::Proposition::new("A", vec![crate::classifier::Predicate::between(0, 0.0, 10.0)]),
                    sid("S0"),
                ),
                (
                    crate::classifier::Proposition::new(
                        "B",
                        vec![crate::classifier::Predicate::between(0, 10.0, 20.0)],
                    ),
                    sid("S1"),
                ),
            ]),
        );
        assert_eq!(
            reestimate_state(&sid("S1"), &[15.0], &[-3.0], &c).unwrap(),
            (sid("S1"), ReestimateFlags { gap_hold: true, rank_jump: false })
        );
    }

    #[test]
    fn four_objects_build_demo3_shape() {
        let c = demo3_classifier();
        let histories: BTreeMap<String, History<f64>> =
            (0..4).map(|i| (format!("o{i}"), hist(&[(0, 1.0), (2, 12.0), (4, 25.0)]))).collect();
        let p = TimePartition::new(vec![0, 2, 4]).unwrap();
        let (d, report) = build_canonical_from_history("D", &histories, &c, &p).unwrap();
        assert!(report.is_empty(), "{report}");
        assert_eq!(
            d.states.iter().map(|s| (s.id.as_str(), s.rank, s.level)).collect::<Vec<_>>(),
            [("S0", 0, 0), ("S1", 1, 1), ("S2", 2, 2)]
        );
        let shape: Vec<_> = d.arcs.iter().map(|a| (a.source.as_str(), a.target.as_str(), a.kind)).collect();
        assert_eq!(shape, [("S0", "S1", ArcKind::Forward), ("S1", "S2", ArcKind::Forward)]);
        assert_eq!(d.mu, vec![Distribution::point("S0"), Distribution::point("S1"), Distribution::point("S2")]);
        assert_eq!(d.population, 4);
    }

    #[test]
    fn constant_object_single_state() {
        let c = demo3_classifier();
        let histories: BTreeMap<String, History<f64>> =
            [("o".to_owned(), hist(&[(0, 1.0), (2, 2.0), (4, 3.0)]))].into();
        let p = TimePartition::new(vec![0, 2, 4]).unwrap();
        let (d, _) = build_canonical_from_history("D", &histories, &c, &p).unwrap();
        assert_eq!(d.states.len(), 1);
        assert!(d.arcs.is_empty());
        assert!(d.mu.iter().all(|m| *m == Distribution::point("S0")));
    }

    #[test]
    fn backstep_observed() {
        let c = demo3_classifier();
        let histories: BTreeMap<String, History<f64>> =
            [("o".to_owned(), hist(&[(0, 1.0), (2, 12.0), (4, 3.0)]))].into();
        let p = TimePartition::new(vec![0, 2, 4]).unwrap();
        let (d, _) = build_canonical_from_history("D", &histories, &c, &p).unwrap();
        assert!(d.arcs.iter().any(|a| a.kind == ArcKind::Backstep && a.source == sid("S1") && a.target == sid("S0")));
    }

    #[test]
    fn missing_boundary_sample() {
        let c = demo3_classifier();
        let histories: BTreeMap<String, History<f64>> = [("o".to_owned(), hist(&[(0, 1.0), (4, 3.0)]))].into();
        let p = TimePartition::new(vec![0, 2, 4]).unwrap();
        assert_eq!(
            build_canonical_from_history("D", &histories, &c, &p).unwrap_err(),
            HistoryError::UnsampledBoundary { object: "o".into(), tick: 2 }
        );
    }
}
