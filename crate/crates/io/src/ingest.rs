//! Monitoring data: per-object parameter samples classified into states and
//! counted against the arcs of the declared diagrams.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use hsgd_core::classifier::{reestimate_state, Classification, Classifier, ClassifyError};
use hsgd_core::{
    compare_distributions, ActualDynamics, ArcId, DiagramId, DynamicsError, HsgdModel, PopulationEvent, StateId, Tick,
};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitoringRecord {
    pub tick: Tick,
    pub object: String,
    pub diagram: DiagramId,
    pub params: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("record {index} has tick {tick} after tick {previous}: input must be sorted by tick")]
    UnsortedInput { index: usize, tick: Tick, previous: Tick },
    #[error("unknown diagram `{0}`")]
    UnknownDiagram(DiagramId),
    #[error("diagram `{0}` has no classifier")]
    MissingClassifier(DiagramId),
    #[error("object `{object}` of `{diagram}`: {source}")]
    Classify { diagram: DiagramId, object: String, source: ClassifyError },
    #[error("header must start with tick,object,diagram followed by parameter columns")]
    BadHeader,
    #[error("record {index}: {message}")]
    BadRecord { index: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Reads `tick,object,diagram,p1..pN`. Empty trailing parameter cells are
/// dropped so that diagrams of different dimensions can share one file.
pub fn read_monitoring<R: Read>(input: R) -> Result<Vec<MonitoringRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(input);
    let header = reader.headers()?;
    if header.len() < 3 || &header[0] != "tick" || &header[1] != "object" || &header[2] != "diagram" {
        return Err(IngestError::BadHeader);
    }
    let mut out = Vec::new();
    for (index, row) in reader.records().enumerate() {
        let row = row?;
        let bad = |message: String| IngestError::BadRecord { index, message };
        if row.len() < 3 {
            return Err(bad("expected tick, object and diagram".into()));
        }
        let tick = row[0].parse().map_err(|_| bad(format!("bad tick `{}`", &row[0])))?;
        let mut params = Vec::new();
        for cell in row.iter().skip(3) {
            if cell.is_empty() {
                continue;
            }
            params.push(cell.parse().map_err(|_| bad(format!("bad parameter `{cell}`")))?);
        }
        out.push(MonitoringRecord { tick, object: row[1].to_owned(), diagram: row[2].into(), params });
    }
    Ok(out)
}

/// A classified move that the diagram cannot represent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Anomaly {
    pub tick: Tick,
    pub diagram: DiagramId,
    pub object: String,
    pub message: String,
}

/// A sample whose re-estimation raised a flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlaggedSample {
    pub tick: Tick,
    pub diagram: DiagramId,
    pub object: String,
    pub gap_hold: bool,
    pub rank_jump: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    pub dynamics: BTreeMap<DiagramId, ActualDynamics>,
    pub anomalies: Vec<Anomaly>,
    pub flags: Vec<FlaggedSample>,
    /// L1 distance between the observed distribution and `μi` at each
    /// boundary inside the observed span.
    pub divergence: BTreeMap<DiagramId, Vec<(Tick, f64)>>,
}

struct Tracked<'a> {
    initial: StateId,
    /// State the object holds in the counted dynamics.
    counted: StateId,
    /// Tick at which it entered `counted`.
    entered: Tick,
    observed: StateId,
    last_tick: Tick,
    last_params: &'a [f64],
}

/// Classifies each sample with [`reestimate_state`] and books every change
/// of state on the arc joining the two states. A change at tick `t` along an
/// arc with transit time `θ` departs at `t − θ`, but never before the object
/// entered its source. Moves with no arc are reported and left out of the
/// counters. An object's first sample fixes its initial state; the observed
/// span runs from tick 0 to the last sampled tick of the diagram.
pub fn ingest_monitoring(
    records: &[MonitoringRecord],
    model: &HsgdModel,
    classifiers: &BTreeMap<DiagramId, Classifier<f64>>,
) -> Result<IngestReport, IngestError> {
    let mut by_diagram: BTreeMap<&DiagramId, Vec<&MonitoringRecord>> = BTreeMap::new();
    let mut previous = 0;
    for (index, r) in records.iter().enumerate() {
        if r.tick < previous {
            return Err(IngestError::UnsortedInput { index, tick: r.tick, previous });
        }
        previous = r.tick;
        if model.diagram(&r.diagram).is_none() {
            return Err(IngestError::UnknownDiagram(r.diagram.clone()));
        }
        if !classifiers.contains_key(&r.diagram) {
            return Err(IngestError::MissingClassifier(r.diagram.clone()));
        }
        by_diagram.entry(&r.diagram).or_default().push(r);
    }

    let mut report = IngestReport {
        dynamics: BTreeMap::new(),
        anomalies: Vec::new(),
        flags: Vec::new(),
        divergence: BTreeMap::new(),
    };
    for (id, classifier) in classifiers {
        let Some(diagram) = model.diagram(id) else { continue };
        let Some(rows) = by_diagram.get(id) else {
            // nothing observed: zero counters and no boundary to compare
            report.dynamics.insert(id.clone(), ActualDynamics::from_counts(diagram, &BTreeMap::new(), 0));
            continue;
        };
        let classify_err =
            |object: &str, source| IngestError::Classify { diagram: id.clone(), object: object.to_owned(), source };
        let horizon = rows.iter().map(|r| r.tick).max().unwrap_or(0);
        let mut objects: BTreeMap<&str, Tracked<'_>> = BTreeMap::new();
        let mut departures: BTreeMap<(Tick, bool, ArcId), u64> = BTreeMap::new();
        for r in rows {
            let Some(obj) = objects.get_mut(r.object.as_str()) else {
                match classifier.classify(&r.params).map_err(|e| classify_err(&r.object, e))? {
                    Classification::State(s) => {
                        objects.insert(
                            &r.object,
                            Tracked {
                                initial: s.clone(),
                                counted: s.clone(),
                                entered: 0,
                                observed: s,
                                last_tick: r.tick,
                                last_params: &r.params,
                            },
                        );
                    }
                    Classification::Unclassified => report.anomalies.push(Anomaly {
                        tick: r.tick,
                        diagram: id.clone(),
                        object: r.object.clone(),
                        message: "unclassified first sample".into(),
                    }),
                }
                continue;
            };
            if r.tick == obj.last_tick {
                report.anomalies.push(Anomaly {
                    tick: r.tick,
                    diagram: id.clone(),
                    object: r.object.clone(),
                    message: "repeated sample".into(),
                });
                continue;
            }
            let (state, flags) = reestimate_state(&obj.observed, obj.last_params, &r.params, classifier)
                .map_err(|e| classify_err(&r.object, e))?;
            if flags.gap_hold || flags.rank_jump {
                report.flags.push(FlaggedSample {
                    tick: r.tick,
                    diagram: id.clone(),
                    object: r.object.clone(),
                    gap_hold: flags.gap_hold,
                    rank_jump: flags.rank_jump,
                });
            }
            if state != obj.observed {
                if state != obj.counted {
                    match diagram.arcs.iter().find(|a| a.source == obj.counted && a.target == state) {
                        Some(arc) => {
                            let departure = r.tick.saturating_sub(arc.theta).max(obj.entered);
                            // instantaneous moves first, so an object re-entering a state is there before it leaves
                            *departures.entry((departure, arc.theta > 0, arc.id.clone())).or_default() += 1;
                            obj.counted = state.clone();
                            obj.entered = r.tick;
                        }
                        None => report.anomalies.push(Anomaly {
                            tick: r.tick,
                            diagram: id.clone(),
                            object: r.object.clone(),
                            message: format!("no-arc {}→{state}", obj.counted),
                        }),
                    }
                }
                obj.observed = state;
            }
            obj.last_tick = r.tick;
            obj.last_params = &r.params;
        }

        let mut counts: BTreeMap<StateId, u64> = BTreeMap::new();
        for obj in objects.values() {
            *counts.entry(obj.initial.clone()).or_default() += 1;
        }
        let events: Vec<PopulationEvent> = departures
            .into_iter()
            .map(|((departure, _, arc), count)| PopulationEvent::new(arc, count, departure))
            .collect();
        let dynamics = ActualDynamics::from_counts(diagram, &counts, horizon).advance_population(diagram, &events)?;

        let universe: BTreeSet<StateId> = diagram.states.iter().map(|s| s.id.clone()).collect();
        let mut divergence = Vec::new();
        for (i, &b) in diagram.partition.boundaries.iter().enumerate() {
            let (Some(expected), true) = (diagram.mu.get(i), b <= horizon) else { continue };
            let observed = dynamics.distribution_at::<f64>(b as i64)?;
            divergence.push((b, compare_distributions(expected, &observed, &universe)?));
        }
        report.divergence.insert(id.clone(), divergence);
        report.dynamics.insert(id.clone(), dynamics);
    }
    Ok(report)
}
