use std::collections::BTreeSet;

use hsgd_core::diagram::Distribution;
use hsgd_core::scenario::{compare, evaluate, run, run_inertial, step, CriterionConfig, EventKind, SimState};
use hsgd_core::testkit::oracle::{conserved, forward_counters_zero, recount, replay};
use hsgd_core::testkit::{random_model, random_scenario, seeded, ModelShape};
use hsgd_core::{ControlScenario, HsgdModel, Rational64, Tick};
use proptest::prelude::*;

fn model_and_scenario(seed: u64) -> (HsgdModel, ControlScenario) {
    let mut rng = seeded(seed);
    let m = random_model(&mut rng, &ModelShape::default());
    let sc = random_scenario(&mut rng, &m, "s");
    (m, sc)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn population_is_conserved(seed in any::<u64>()) {
        let (m, sc) = model_and_scenario(seed);
        let tr = run(&m, &sc).unwrap();
        prop_assert!(conserved(&m, &tr));
    }

    #[test]
    fn counters_never_decrease(seed in any::<u64>()) {
        let (m, sc) = model_and_scenario(seed);
        let tr = run(&m, &sc).unwrap();
        for trace in tr.diagrams.values() {
            for series in trace.dynamics.eta.values() {
                prop_assert!(series.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn per_state_balance(seed in any::<u64>()) {
        let (m, sc) = model_and_scenario(seed);
        let tr = run(&m, &sc).unwrap();
        for d in m.diagrams.values() {
            let dy = &tr.diagrams[&d.id].dynamics;
            for s in &d.states {
                let mut prev = tr.initial[&d.id][&s.id] as i64;
                for t in 0..=tr.horizon {
                    let mut delta = 0i64;
                    for e in tr.events.iter().filter(|e| e.tick == t && e.diagram == d.id) {
                        match &e.kind {
                            EventKind::Arrival { target, objects, .. } if target == &s.id => delta += objects.len() as i64,
                            EventKind::Departure { source, objects, .. } if source == &s.id => delta -= objects.len() as i64,
                            EventKind::Backstep { source, target, objects, .. } => {
                                if target == &s.id { delta += objects.len() as i64 }
                                if source == &s.id { delta -= objects.len() as i64 }
                            }
                            _ => {}
                        }
                    }
                    let now = dy.occupancy[&s.id][t as usize] as i64;
                    prop_assert_eq!(now - prev, delta, "state {} tick {}", s.id, t);
                    prev = now;
                }
            }
        }
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>()) {
        let (m, sc) = model_and_scenario(seed);
        prop_assert_eq!(run(&m, &sc).unwrap(), run(&m, &sc).unwrap());
    }

    #[test]
    fn folding_step_matches_run(seed in any::<u64>()) {
        let (m, sc) = model_and_scenario(seed);
        let tr = run(&m, &sc).unwrap();
        let mut state = SimState::new(&m, sc.guards.clone());
        let mut events = Vec::new();
        for t in 0..=sc.horizon {
            let (next, ev) = step(&m, &state, t, &sc.schedule.symbols_at(t)).unwrap();
            events.extend(ev);
            state = next;
        }
        prop_assert_eq!(events, tr.events);
        prop_assert_eq!(state.redundancy_count, tr.redundancy_count);
    }

    #[test]
    fn replay_reproduces_series(seed in any::<u64>()) {
        let (m, sc) = model_and_scenario(seed);
        let tr = run(&m, &sc).unwrap();
        for (id, r) in replay(&m, &tr) {
            let dy = &tr.diagrams[&id].dynamics;
            prop_assert_eq!(&r.occupancy, &dy.occupancy);
            prop_assert_eq!(&r.in_transit, &dy.in_transit);
            prop_assert_eq!(&r.eta, &dy.eta);
        }
    }

    #[test]
    fn inertial_runs_never_advance(seed in any::<u64>(), horizon in 0u32..=32) {
        let (m, _) = model_and_scenario(seed);
        let tr = run_inertial(&m, horizon);
        prop_assert!(forward_counters_zero(&m, &tr));
        prop_assert!(conserved(&m, &tr));
    }

    #[test]
    fn metrics_match_recount(seed in any::<u64>()) {
        let (m, sc) = model_and_scenario(seed);
        let tr = run(&m, &sc).unwrap();
        let rep = evaluate(&m, &tr, &sc).unwrap();
        let oracle = recount(&m, &tr);
        let ratio = |(n, d): (u64, u64)| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        prop_assert_eq!(rep.complete, oracle.complete);
        prop_assert_eq!(rep.redundancy_count, oracle.redundancy_count);
        prop_assert_eq!(rep.omitted_ratio, ratio(oracle.omitted));
        prop_assert_eq!(rep.complexness, ratio(oracle.complexness));
        prop_assert_eq!(rep.resource_total, oracle.resource_total);
    }

    #[test]
    fn exact_metrics_match_recount(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let m: hsgd_core::ExactHsgdModel = random_model(&mut rng, &ModelShape::default());
        let sc = random_scenario(&mut rng, &m, "s");
        let tr = run(&m, &sc).unwrap();
        let rep = evaluate(&m, &tr, &sc).unwrap();
        let oracle = recount(&m, &tr);
        let ratio = |(n, d): (u64, u64)| if d == 0 { Rational64::from_integer(0) } else { Rational64::new(n as i64, d as i64) };
        prop_assert_eq!(rep.omitted_ratio, ratio(oracle.omitted));
        prop_assert_eq!(rep.complexness, ratio(oracle.complexness));
        prop_assert_eq!(rep.resource_total, oracle.resource_total);
        prop_assert_eq!(rep.redundancy_count, oracle.redundancy_count);
    }

    #[test]
    fn modal_rank_rises_under_forward_only_control(seed in any::<u64>()) {
        let (mut m, sc) = model_and_scenario(seed);
        for d in m.diagrams.values_mut() {
            for s in &mut d.states {
                s.dwell_limit = None;
            }
            d.mu[0] = Distribution::point(d.initial.clone());
        }
        let tr = run(&m, &sc).unwrap();
        let v = hsgd_core::scenario::efficiency_vectors(&m, &tr, &CriterionConfig::default()).unwrap();
        for (id, ev) in v {
            let d = &m.diagrams[&id];
            let ranks: Vec<u32> = ev.s.iter().map(|s| d.rank(s).unwrap()).collect();
            prop_assert!(ranks.windows(2).all(|w| w[0] <= w[1]), "{:?}", ranks);
        }
    }

    #[test]
    fn compare_ignores_weight_scale(seed in any::<u64>(), k in 1u32..=9) {
        let mut rng = seeded(seed);
        let m: HsgdModel = random_model(&mut rng, &ModelShape::default());
        let scenarios: Vec<ControlScenario> = (0..4).map(|i| random_scenario(&mut rng, &m, &format!("s{i}"))).collect();
        let rank = |scale: f64| {
            let reports: Vec<_> = scenarios
                .iter()
                .map(|sc| {
                    let mut sc = sc.clone();
                    sc.criterion.rank_weight *= scale;
                    sc.criterion.cost_weight *= scale;
                    evaluate(&m, &run(&m, &sc).unwrap(), &sc).unwrap()
                })
                .collect();
            compare(&reports).unwrap()
        };
        prop_assert_eq!(rank(1.0), rank(k as f64));
    }
}

#[test]
fn horizon_beyond_model_is_rejected() {
    let (m, mut sc) = model_and_scenario(7);
    sc.horizon = m.max_horizon() + 1;
    assert!(run(&m, &sc).is_err());
}

#[test]
fn symbols_only_move_resting_objects() {
    // every departure lists objects that were resting in the arc's source
    for seed in 0..32 {
        let (m, sc) = model_and_scenario(seed);
        let tr = run(&m, &sc).unwrap();
        let mut seen: BTreeSet<(Tick, String, u32)> = BTreeSet::new();
        for e in &tr.events {
            if let EventKind::Departure { objects, .. } = &e.kind {
                for &o in objects {
                    assert!(seen.insert((e.tick, e.diagram.to_string(), o)), "object {o} departs twice at {}", e.tick);
                }
            }
        }
    }
}
