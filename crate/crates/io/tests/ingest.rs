use std::collections::BTreeMap;

use hsgd_core::classifier::{build_canonical_from_history, History};
use hsgd_core::fixtures::{demo3_classifier, demo3_model};
use hsgd_core::hierarchy::{assemble, ModelParts};
use hsgd_core::scenario::run;
use hsgd_core::testkit::{random_flat_model, samples_from_run, seeded, settled_scenario, ModelShape};
use hsgd_core::{ArcId, DiagramId, HsgdModel, StateId, TimePartition};
use hsgd_io::{ingest_monitoring, read_monitoring, IngestError, MonitoringRecord};

const DEMO3_CSV: &str = include_str!("../fixtures/demo3.csv");

fn demo3_classifiers() -> BTreeMap<DiagramId, hsgd_core::Classifier> {
    BTreeMap::from([("D".into(), demo3_classifier())])
}

fn record(tick: u32, object: &str, x: f64) -> MonitoringRecord {
    MonitoringRecord { tick, object: object.into(), diagram: "D".into(), params: vec![x] }
}

#[test]
fn demo3_samples_count_every_move() {
    let records = read_monitoring(DEMO3_CSV.as_bytes()).unwrap();
    assert_eq!(records.len(), 12);
    let report = ingest_monitoring(&records, &demo3_model(), &demo3_classifiers()).unwrap();
    let d = &report.dynamics[&DiagramId::from("D")];
    assert_eq!(d.horizon, 4);
    assert_eq!(d.eta[&ArcId::from("a01")], vec![0, 0, 4, 4, 4]);
    assert_eq!(d.eta[&ArcId::from("a12")], vec![0, 0, 0, 0, 4]);
    assert_eq!(d.eta[&ArcId::from("b10")], vec![0; 5]);
    assert_eq!(d.in_transit, vec![0, 4, 0, 4, 0]);
    assert!(report.anomalies.is_empty());
    assert!(report.flags.is_empty());
    assert_eq!(report.divergence[&DiagramId::from("D")], vec![(0, 0.0), (2, 0.0), (4, 0.0)]);
}

#[test]
fn move_without_arc_is_an_anomaly() {
    let records = vec![record(0, "o1", 5.0), record(0, "o2", 5.0), record(2, "o1", 25.0), record(2, "o2", 15.0)];
    let report = ingest_monitoring(&records, &demo3_model(), &demo3_classifiers()).unwrap();
    assert_eq!(report.anomalies.len(), 1);
    assert_eq!(report.anomalies[0].object, "o1");
    assert_eq!(report.anomalies[0].message, "no-arc S0→S2");
    assert!(report.flags.iter().any(|f| f.object == "o1" && f.rank_jump));
    let d = &report.dynamics[&DiagramId::from("D")];
    assert_eq!(d.eta[&ArcId::from("a01")], vec![0, 0, 1]);
    assert_eq!(d.eta[&ArcId::from("a12")], vec![0, 0, 0]);
}

#[test]
fn backsteps_are_counted() {
    let records = vec![record(0, "o1", 5.0), record(1, "o1", 15.0), record(2, "o1", 5.0)];
    let report = ingest_monitoring(&records, &demo3_model(), &demo3_classifiers()).unwrap();
    let d = &report.dynamics[&DiagramId::from("D")];
    assert_eq!(d.eta[&ArcId::from("a01")], vec![0, 1, 1]);
    assert_eq!(d.eta[&ArcId::from("b10")], vec![0, 0, 1]);
    assert_eq!(d.occupancy[&StateId::from("S0")], vec![0, 0, 1]);
}

#[test]
fn gaps_hold_the_previous_state() {
    let mut c = demo3_classifier();
    c.root.entries.remove(1);
    let classifiers = BTreeMap::from([("D".into(), c)]);
    let records = vec![record(0, "o1", 5.0), record(1, "o1", 15.0)];
    let report = ingest_monitoring(&records, &demo3_model(), &classifiers).unwrap();
    assert!(report.flags[0].gap_hold);
    assert_eq!(report.dynamics[&DiagramId::from("D")].eta[&ArcId::from("a01")], vec![0, 0]);
}

#[test]
fn empty_stream_gives_zero_dynamics() {
    let records = read_monitoring("tick,object,diagram,p1\n".as_bytes()).unwrap();
    let report = ingest_monitoring(&records, &demo3_model(), &demo3_classifiers()).unwrap();
    let d = &report.dynamics[&DiagramId::from("D")];
    assert_eq!(d.horizon, 0);
    assert!(d.eta.values().all(|series| series.iter().all(|&n| n == 0)));
    assert!(report.anomalies.is_empty());
}

#[test]
fn unsorted_input_is_rejected() {
    let records = vec![record(2, "o1", 5.0), record(1, "o1", 15.0)];
    let err = ingest_monitoring(&records, &demo3_model(), &demo3_classifiers()).unwrap_err();
    assert!(matches!(err, IngestError::UnsortedInput { index: 1, tick: 1, previous: 2 }));
}

#[test]
fn unknown_diagram_is_rejected() {
    let mut r = record(0, "o1", 5.0);
    r.diagram = "Q".into();
    let err = ingest_monitoring(&[r], &demo3_model(), &demo3_classifiers()).unwrap_err();
    assert!(matches!(err, IngestError::UnknownDiagram(d) if d.as_str() == "Q"));
}

#[test]
fn wrong_dimension_is_rejected() {
    let mut r = record(0, "o1", 5.0);
    r.params.push(1.0);
    let err = ingest_monitoring(&[r], &demo3_model(), &demo3_classifiers()).unwrap_err();
    assert!(matches!(err, IngestError::Classify { .. }));
}

#[test]
fn csv_shape_is_checked() {
    assert!(matches!(read_monitoring("t,o,d\n".as_bytes()), Err(IngestError::BadHeader)));
    let bad = read_monitoring("tick,object,diagram,p1\nx,o1,D,1\n".as_bytes());
    assert!(matches!(bad, Err(IngestError::BadRecord { index: 0, .. })));
    let mixed = read_monitoring("tick,object,diagram,p1,p2\n0,o1,D,1,\n0,o2,E,1,2\n".as_bytes()).unwrap();
    assert_eq!(mixed[0].params, vec![1.0]);
    assert_eq!(mixed[1].params, vec![1.0, 2.0]);
}

#[test]
fn sampled_runs_are_reproduced() {
    let shape = ModelShape { max_levels: 1, ..ModelShape::default() };
    for seed in 0..20 {
        let mut rng = seeded(seed);
        let (model, classifier): (HsgdModel, _) = random_flat_model(&mut rng, &shape);
        let scenario = settled_scenario(&mut rng, &model, shape.max_theta);
        let trajectory = run(&model, &scenario).unwrap();
        let records: Vec<MonitoringRecord> = samples_from_run(&mut rng, &model, &trajectory)
            .into_iter()
            .map(|(tick, object, diagram, params)| MonitoringRecord { tick, object, diagram, params })
            .collect();
        let classifiers = BTreeMap::from([("D".into(), classifier)]);
        let report = ingest_monitoring(&records, &model, &classifiers).unwrap();
        let id = DiagramId::from("D");
        let expected = trajectory.dynamics(&id).unwrap();
        let got = &report.dynamics[&id];
        assert_eq!(got.eta, expected.eta, "seed {seed}");
        assert_eq!(got.occupancy, expected.occupancy, "seed {seed}");
        assert!(report.anomalies.is_empty(), "seed {seed}");
    }
}

/// Histories sampled at boundaries at least two ticks apart: a move seen at
/// a boundary departed after the previous one, so no object is in transit
/// at any boundary and the rebuilt `μi` is observed exactly.
#[test]
fn rebuilt_diagrams_reproduce_their_boundary_distributions() {
    let shape = ModelShape { max_levels: 1, max_horizon: 24, ..ModelShape::default() };
    let mut checked = 0;
    for seed in 0..60 {
        let mut rng = seeded(seed);
        let (model, classifier): (HsgdModel, _) = random_flat_model(&mut rng, &shape);
        let scenario = settled_scenario(&mut rng, &model, shape.max_theta);
        let trajectory = run(&model, &scenario).unwrap();
        let boundaries: Vec<u32> = (0..=model.max_horizon()).step_by(2).collect();
        if boundaries.len() < 2 {
            continue;
        }
        let records: Vec<MonitoringRecord> = samples_from_run(&mut rng, &model, &trajectory)
            .into_iter()
            .filter(|(tick, ..)| boundaries.contains(tick))
            .map(|(tick, object, diagram, params)| MonitoringRecord { tick, object, diagram, params })
            .collect();
        let mut histories: BTreeMap<String, History<f64>> = BTreeMap::new();
        for r in &records {
            histories.entry(r.object.clone()).or_default().insert(r.tick, r.params.clone());
        }
        let partition = TimePartition::new(boundaries).unwrap();
        let (rebuilt, _) = build_canonical_from_history("D", &histories, &classifier, &partition).unwrap();
        let mut parts = ModelParts::new("rebuilt");
        parts.diagrams.push(rebuilt);
        // objects starting in several states can leave some unreachable
        let Ok(rebuilt_model) = assemble(parts) else { continue };
        let classifiers = BTreeMap::from([("D".into(), classifier)]);
        let report = ingest_monitoring(&records, &rebuilt_model, &classifiers).unwrap();
        let divergence = &report.divergence[&DiagramId::from("D")];
        assert_eq!(divergence.len(), partition.boundaries.len(), "seed {seed}");
        assert!(divergence.iter().all(|&(_, d)| d == 0.0), "seed {seed}: {divergence:?}");
        assert!(report.anomalies.is_empty(), "seed {seed}");
        checked += 1;
    }
    assert!(checked >= 20, "only {checked} rebuilt diagrams assembled");
}
