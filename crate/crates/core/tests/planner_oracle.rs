use std::collections::BTreeSet;

use hsgd_core::fixtures::{demo3, planner_rules};
use hsgd_core::planner::{enumerate_plans, execution_model, plan_scenario, validate_rules, Budgets, PlannerError};
use hsgd_core::scenario::{evaluate, run};
use hsgd_core::testkit::oracle::pareto_chains;
use hsgd_core::testkit::{random_rule_base, seeded};
use hsgd_core::{ExactTransitionRule, Rational64, RuleId, StateId};
use proptest::prelude::*;
use rand::seq::SliceRandom;

/// Plans as rule-id chains; `None` when the planner reports an unknown
/// start or goal, which must happen exactly when no rule mentions it.
fn returned(
    rules: &[ExactTransitionRule],
    start: &StateId,
    goal: &StateId,
    budgets: Budgets<Rational64>,
) -> Option<BTreeSet<Vec<RuleId>>> {
    let mentioned = |s: &StateId| rules.iter().any(|r| &r.from == s || &r.to == s);
    match enumerate_plans(rules, start, goal, Some(budgets)) {
        Ok(plans) => {
            assert!(mentioned(start) && mentioned(goal));
            Some(plans.iter().map(|p| p.rule_ids()).collect())
        }
        Err(PlannerError::NoPlanExists(s)) => {
            assert!(!mentioned(&s), "{s:?} is mentioned by a rule");
            None
        }
        Err(e) => panic!("{e}"),
    }
}

fn random_budgets(seed: u64) -> Budgets<Rational64> {
    match seed % 4 {
        0 => Budgets { resource: None, time: None },
        1 => Budgets { resource: Some(Rational64::from_integer((seed % 17) as i64)), time: None },
        2 => Budgets { resource: None, time: Some((seed % 9) as u32) },
        _ => Budgets { resource: Some(Rational64::from_integer((seed % 23) as i64)), time: Some((seed % 11) as u32) },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pareto_set_matches_exhaustive_enumeration(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let (d, rules, start, goal) = random_rule_base::<Rational64, _>(&mut rng, 8, 20);
        prop_assert!(validate_rules(&rules, &d).is_valid());
        let budgets = random_budgets(seed);
        if let Some(got) = returned(&rules, &start, &goal, budgets) {
            prop_assert_eq!(got, pareto_chains(&rules, &start, &goal, &budgets));
        }
    }

    #[test]
    fn rule_order_does_not_matter(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let (_, mut rules, start, goal) = random_rule_base::<Rational64, _>(&mut rng, 8, 20);
        let before = enumerate_plans(&rules, &start, &goal, None);
        rules.shuffle(&mut rng);
        prop_assert_eq!(before, enumerate_plans(&rules, &start, &goal, None));
    }

    #[test]
    fn plans_respect_guards(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let (_, rules, start, goal) = random_rule_base::<Rational64, _>(&mut rng, 8, 20);
        let Ok(plans) = enumerate_plans(&rules, &start, &goal, None) else { return Ok(()) };
        for p in plans {
            for (k, rule) in p.steps.iter().enumerate() {
                if let Some(l) = &rule.forbidden {
                    prop_assert!(!p.states[k + 1..].contains(l), "{:?}", p.rule_ids());
                }
            }
        }
    }

    #[test]
    fn plans_execute_on_time(seed in any::<u64>(), start_tick in 0u32..4) {
        let mut rng = seeded(seed);
        let (d, rules, start, goal) = random_rule_base::<Rational64, _>(&mut rng, 8, 20);
        let Ok(plans) = enumerate_plans(&rules, &start, &goal, None) else { return Ok(()) };
        for plan in plans.iter().filter(|p| !p.steps.is_empty()) {
            let horizon = start_tick + plan.total_time + 1;
            let m = execution_model(&d, &rules, &start, &goal, horizon).unwrap();
            let sc = plan_scenario(&m, &d.id, plan, start_tick, horizon);
            let tr = run(&m, &sc).unwrap();
            let rep = evaluate(&m, &tr, &sc).unwrap();
            prop_assert_eq!(rep.goal_times[&d.id], Some(start_tick + plan.total_time));
            prop_assert_eq!(rep.resource_total, plan.total_resource);
            let mut chain = tr.object_histories(&d.id)[0].clone();
            chain.dedup();
            prop_assert_eq!(&chain, &plan.states);
        }
    }
}

#[test]
fn fixture_frontier() {
    let rules = planner_rules();
    let plans = enumerate_plans(&rules, &"S0".into(), &"S2".into(), None).unwrap();
    let costs: BTreeSet<(u64, u32)> = plans.iter().map(|p| (p.total_resource as u64, p.total_time)).collect();
    assert_eq!(costs, BTreeSet::from([(5, 3), (6, 2)]));
    assert!(validate_rules(&rules, &demo3()).is_empty());
}
