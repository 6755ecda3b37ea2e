//! Seeded generators for random models, scenarios, rule bases, scales and
//! aggregation maps, plus brute-force oracles in [`oracle`] that recount
//! results from raw inputs and event logs without calling engine code.
//!
//! Every generator takes the RNG explicitly so that a suite seeded with a
//! fixed value is reproducible run to run.

pub mod oracle;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
pub use rand_chacha::ChaCha8Rng;

use crate::classifier::{Classifier, Predicate, Proposition, Scale, ScaleEntry};
use crate::diagram::{Arc, CanonicalDiagram, Distribution, StateNode, TimePartition};
use crate::hierarchy::{all_combos, assemble, AggregationMap, CoupledArc, HsgdModel, ModelParts, Topology};
use crate::ids::{DiagramId, StateId, SymbolId, Tick};
use crate::planner::TransitionRule;
use crate::scalar::Scalar;
use crate::scenario::{ControlScenario, ControlSymbol, CriterionConfig, EventKind, TimeDiagram, Trajectory};

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Size limits for generated models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    /// States per diagram.
    pub max_states: usize,
    pub max_levels: usize,
    pub max_children: usize,
    pub max_population: u64,
    pub max_horizon: Tick,
    pub max_theta: Tick,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self { max_states: 6, max_levels: 3, max_children: 2, max_population: 50, max_horizon: 32, max_theta: 3 }
    }
}

fn frac<T: Scalar>(num: u64, den: u64) -> T {
    T::from_count(num) / T::from_count(den)
}

fn random_distribution<T: Scalar, R: Rng>(rng: &mut R, states: &[StateId]) -> Distribution<T> {
    let mut weights: Vec<u64> = states.iter().map(|_| rng.gen_range(0..=3)).collect();
    if weights.iter().all(|&w| w == 0) {
        let i = rng.gen_range(0..weights.len());
        weights[i] = 1;
    }
    let total: u64 = weights.iter().sum();
    Distribution(states.iter().zip(weights).filter(|(_, w)| *w > 0).map(|(s, w)| (s.clone(), frac(w, total))).collect())
}

pub fn random_partition<R: Rng>(rng: &mut R, horizon: Tick) -> TimePartition {
    let horizon = horizon.max(1);
    let intervals = rng.gen_range(1..=horizon.min(4)) as usize;
    let mut interior: Vec<Tick> = (1..horizon).collect();
    interior.shuffle(rng);
    let mut boundaries: Vec<Tick> = interior.into_iter().take(intervals - 1).collect();
    boundaries.push(0);
    boundaries.push(horizon);
    boundaries.sort_unstable();
    TimePartition { boundaries }
}

/// Knobs for a single generated diagram.
#[derive(Debug, Clone)]
pub struct DiagramSpec<'a> {
    pub id: &'a str,
    /// State ids are `<prefix>0 … <prefix>n-1` in rank order.
    pub state_prefix: &'a str,
    pub states: usize,
    pub horizon: Tick,
    pub population: u64,
}

/// A valid diagram: a forward chain through every state (so all are
/// reachable), optional skip arcs two states ahead, optional backsteps to a
/// strictly lower state, random dwell limits ≥ 1, transit times in
/// `1..=max_theta`, ranks spaced by 1 or 2, and random boundary
/// distributions (`μ0` a point mass on the initial state half of the time).
/// No two arcs share both endpoints.
pub fn random_diagram<T: Scalar, R: Rng>(rng: &mut R, spec: &DiagramSpec<'_>, max_theta: Tick) -> CanonicalDiagram<T> {
    let n = spec.states.max(1);
    let partition = random_partition(rng, spec.horizon);
    let groups = partition.interval_count() as u32;
    let step = rng.gen_range(1..=2u32);
    let ids: Vec<StateId> = (0..n).map(|i| StateId(format!("{}{i}", spec.state_prefix))).collect();
    let states = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let mut s = StateNode::new(id.clone(), i as u32 * step, (i as u32).min(groups));
            if rng.gen_bool(0.5) {
                s.dwell_limit = Some(rng.gen_range(1..=4));
            }
            s
        })
        .collect();

    let mut arcs = Vec::new();
    for i in 0..n.saturating_sub(1) {
        arcs.push(Arc::forward(
            format!("{}_f{i}", spec.id),
            ids[i].clone(),
            ids[i + 1].clone(),
            rng.gen_range(1..=max_theta),
        ));
    }
    for i in 0..n.saturating_sub(2) {
        if rng.gen_bool(0.3) {
            arcs.push(Arc::forward(
                format!("{}_s{i}", spec.id),
                ids[i].clone(),
                ids[i + 2].clone(),
                rng.gen_range(1..=max_theta),
            ));
        }
    }
    for i in 1..n {
        if rng.gen_bool(0.5) {
            let j = rng.gen_range(0..i);
            arcs.push(Arc::backstep(format!("{}_b{i}", spec.id), ids[i].clone(), ids[j].clone()));
        }
    }

    let mut mu = Vec::with_capacity(partition.boundaries.len());
    for k in 0..partition.boundaries.len() {
        if k == 0 && rng.gen_bool(0.5) {
            mu.push(Distribution::point(ids[0].clone()));
        } else {
            mu.push(random_distribution(rng, &ids));
        }
    }

    CanonicalDiagram {
        id: DiagramId::from(spec.id),
        partition,
        states,
        arcs,
        initial: ids[0].clone(),
        final_state: ids[n - 1].clone(),
        mu,
        population: spec.population,
    }
}

struct Node {
    id: String,
    depth: usize,
    states: usize,
    children: Vec<usize>,
}

/// Parent state index of a child combination: the lowest child position,
/// capped at the parent's top state. Monotone by construction.
fn min_rule<T: Scalar>(children: &[&CanonicalDiagram<T>], combo: &[StateId], parent_states: usize) -> usize {
    combo
        .iter()
        .zip(children)
        .map(|(s, c)| c.position(s).expect("combo state"))
        .min()
        .unwrap_or(0)
        .min(parent_states - 1)
}

fn min_rule_map<T: Scalar>(parent: &CanonicalDiagram<T>, children: &[&CanonicalDiagram<T>]) -> AggregationMap {
    let ordered: Vec<StateId> = parent.ordered_states().iter().map(|s| s.id.clone()).collect();
    let mut blocks: BTreeMap<usize, Vec<Vec<StateId>>> = BTreeMap::new();
    for combo in all_combos(children) {
        blocks.entry(min_rule(children, &combo, ordered.len())).or_default().push(combo);
    }
    AggregationMap {
        children: children.iter().map(|c| c.id.clone()).collect(),
        blocks: blocks
            .into_iter()
            .map(|(i, combos)| crate::hierarchy::AggregationBlock { parent_state: ordered[i].clone(), combos })
            .collect(),
    }
}

/// A random assembled model: one tree of up to `max_levels` levels, each
/// parent with 1..=`max_children` children holding at least as many states
/// as the parent. Parent states aggregate child combinations by their lowest
/// child position. Each parent couples one or more of its chain arcs to the
/// same-index chain arcs of every child, with a random or default quorum.
/// Coupling parents carry general symbols; other forward arcs carry an
/// individual symbol with probability 0.8.
pub fn random_model<T: Scalar, R: Rng>(rng: &mut R, shape: &ModelShape) -> HsgdModel<T> {
    let levels = rng.gen_range(1..=shape.max_levels);
    let horizon = rng.gen_range(1..=shape.max_horizon);
    let mut nodes =
        vec![Node { id: "D0".into(), depth: 0, states: rng.gen_range(2..=shape.max_states), children: vec![] }];
    let mut i = 0;
    while i < nodes.len() {
        if nodes[i].depth + 1 < levels {
            let k = rng.gen_range(1..=shape.max_children);
            for _ in 0..k {
                let id = format!("D{}", nodes.len());
                let states = rng.gen_range(nodes[i].states..=shape.max_states);
                let depth = nodes[i].depth + 1;
                let idx = nodes.len();
                nodes.push(Node { id, depth, states, children: vec![] });
                nodes[i].children.push(idx);
            }
        }
        i += 1;
    }

    let diagrams: Vec<CanonicalDiagram<T>> = nodes
        .iter()
        .map(|n| {
            let population = rng.gen_range(1..=shape.max_population);
            random_diagram(
                rng,
                &DiagramSpec { id: &n.id, state_prefix: "S", states: n.states, horizon, population },
                shape.max_theta,
            )
        })
        .collect();

    let mut parts = ModelParts::new(format!("random-{}", rng.gen::<u32>()));
    let mut topology = Topology::new();
    let mut couplings = Vec::new();
    for (pi, n) in nodes.iter().enumerate() {
        if n.children.is_empty() {
            continue;
        }
        let parent = &diagrams[pi];
        let kids: Vec<&CanonicalDiagram<T>> = n.children.iter().map(|&c| &diagrams[c]).collect();
        for k in &kids {
            topology = topology.edge(n.id.as_str(), k.id.as_str());
        }
        parts.aggregations.insert(parent.id.clone(), min_rule_map(parent, &kids));
        let mut chosen: Vec<usize> = (0..n.states - 1).filter(|_| rng.gen_bool(0.5)).collect();
        if chosen.is_empty() {
            chosen.push(rng.gen_range(0..n.states - 1));
        }
        for idx in chosen {
            let quorum = if rng.gen_bool(0.4) { None } else { Some(rng.gen_range(1..=kids.len())) };
            couplings.push(CoupledArc {
                parent: format!("{}_f{idx}", n.id).into(),
                children: kids.iter().map(|k| format!("{}_f{idx}", k.id).into()).collect(),
                quorum,
            });
        }
    }

    let parents: BTreeSet<_> = couplings.iter().map(|c| c.parent.clone()).collect();
    let mut symbols = Vec::new();
    for d in &diagrams {
        for a in d.forward_arcs() {
            let cost = T::from_count(rng.gen_range(0..=5));
            let id = format!("x_{}", a.id);
            if parents.contains(&a.id) {
                symbols.push(ControlSymbol::general(id, a.id.clone(), cost));
            } else if rng.gen_bool(0.8) {
                symbols.push(ControlSymbol::individual(id, a.id.clone(), cost));
            }
        }
    }

    parts.diagrams = diagrams;
    parts.topology = topology;
    parts.couplings = couplings;
    parts.symbols = symbols;
    assemble(parts).expect("generated model assembles")
}

/// A random schedule over `0..=horizon`: each tick gets 1..=3 symbols with
/// probability 0.35, restricted to ticks `≤ last_symbol_tick`.
pub fn random_schedule<T: Scalar, R: Rng>(
    rng: &mut R,
    model: &HsgdModel<T>,
    horizon: Tick,
    last_symbol_tick: Option<Tick>,
) -> TimeDiagram {
    let ids: Vec<SymbolId> = model.symbols.iter().map(|s| s.id.clone()).collect();
    let mut td = TimeDiagram::new();
    let Some(last) = last_symbol_tick.map_or(Some(horizon), |l| (l <= horizon).then_some(l)) else { return td };
    if ids.is_empty() {
        return td;
    }
    for t in 0..=last {
        if rng.gen_bool(0.35) {
            let k = rng.gen_range(1..=3.min(ids.len()));
            td.add(t, ids.choose_multiple(rng, k).cloned());
        }
    }
    td
}

/// A scenario with a horizon in `1..=max horizon`, random weights and priority.
pub fn random_scenario<T: Scalar, R: Rng>(rng: &mut R, model: &HsgdModel<T>, id: &str) -> ControlScenario<T> {
    let horizon = rng.gen_range(1..=model.max_horizon().max(1));
    let schedule = random_schedule(rng, model, horizon, None);
    let mut sc = ControlScenario::new(id, model, schedule, horizon);
    sc.priority = rng.gen_range(1..=3);
    sc.criterion = CriterionConfig {
        rank_weight: T::from_count(rng.gen_range(1..=3)),
        cost_weight: frac(rng.gen_range(0..=2), 4),
    };
    sc
}

/// A single-diagram model with every forward arc addressed by an individual
/// symbol, together with a rank-interval classifier: the state at position
/// `i` holds exactly when `10·i ≤ p0 < 10·(i+1)`.
pub fn random_flat_model<T: Scalar, R: Rng>(rng: &mut R, shape: &ModelShape) -> (HsgdModel<T>, Classifier<T>) {
    let states = rng.gen_range(2..=shape.max_states);
    let horizon = rng.gen_range(1..=shape.max_horizon);
    let population = rng.gen_range(1..=shape.max_population);
    let d: CanonicalDiagram<T> =
        random_diagram(rng, &DiagramSpec { id: "D", state_prefix: "S", states, horizon, population }, shape.max_theta);
    let entries = d
        .ordered_states()
        .iter()
        .enumerate()
        .map(|(i, s)| ScaleEntry {
            proposition: Proposition::new(
                format!("K{i}"),
                vec![Predicate::between(0, T::from_count(10 * i as u64), T::from_count(10 * (i as u64 + 1)))],
            ),
            state: s.id.clone(),
            state_rank: s.rank,
        })
        .collect();
    let classifier = Classifier::single(1, Scale::new(entries));
    let mut parts = ModelParts::new("flat");
    parts.symbols = d
        .forward_arcs()
        .map(|a| ControlSymbol::individual(format!("x_{}", a.id), a.id.clone(), T::from_count(rng.gen_range(0..=5))))
        .collect();
    parts.diagrams.push(d);
    (assemble(parts).expect("generated model assembles"), classifier)
}

/// A scenario for [`random_flat_model`] whose last symbol leaves enough
/// ticks for every departure to arrive within the horizon, so that sampled
/// states show every move.
pub fn settled_scenario<T: Scalar, R: Rng>(rng: &mut R, model: &HsgdModel<T>, max_theta: Tick) -> ControlScenario<T> {
    let horizon = model.max_horizon();
    // too short for any departure to land: leave the schedule empty
    let schedule = match horizon.checked_sub(max_theta) {
        Some(last) => random_schedule(rng, model, horizon, Some(last)),
        None => TimeDiagram::new(),
    };
    ControlScenario::new("settled", model, schedule, horizon)
}

/// One monitoring sample per object per tick: the object's attained state
/// at position `i` becomes a parameter drawn from `[10·i, 10·(i+1))`.
pub fn samples_from_run<T: Scalar, R: Rng>(
    rng: &mut R,
    model: &HsgdModel<T>,
    trajectory: &Trajectory,
) -> Vec<(Tick, String, DiagramId, Vec<T>)> {
    let mut out = Vec::new();
    for d in model.diagrams.values() {
        let histories = trajectory.object_histories(&d.id);
        for (o, history) in histories.iter().enumerate() {
            for (t, s) in history.iter().enumerate() {
                let pos = d.position(s).expect("attained state") as u64;
                out.push((
                    t as Tick,
                    format!("o{o}"),
                    d.id.clone(),
                    vec![T::from_count(10 * pos + rng.gen_range(0..10))],
                ));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.2.cmp(&b.2)).then_with(|| a.1.cmp(&b.1)));
    out
}

/// Symbols of `trajectory` that actually moved objects.
pub fn effective_symbols(trajectory: &Trajectory) -> usize {
    trajectory.events.iter().filter(|e| matches!(e.kind, EventKind::SymbolApplied { moved, .. } if moved > 0)).count()
}

/// A rule base over states `S0…S(n−1)` (rank = index) with unique controls,
/// integer resources in `0..=9`, durations in `1..=4` and occasional
/// forbidden backstep states. Returns the rank-carrying diagram, the rules
/// and a (start, goal) pair.
pub fn random_rule_base<T: Scalar, R: Rng>(
    rng: &mut R,
    max_states: usize,
    max_rules: usize,
) -> (CanonicalDiagram<T>, Vec<TransitionRule<T>>, StateId, StateId) {
    let n = rng.gen_range(2..=max_states);
    let ids: Vec<StateId> = (0..n).map(|i| StateId(format!("S{i}"))).collect();
    let diagram = CanonicalDiagram {
        id: "R".into(),
        partition: TimePartition { boundaries: vec![0, 1] },
        states: ids.iter().enumerate().map(|(i, s)| StateNode::new(s.clone(), i as u32, (i as u32).min(1))).collect(),
        arcs: (0..n - 1).map(|i| Arc::forward(format!("R_f{i}"), ids[i].clone(), ids[i + 1].clone(), 1)).collect(),
        initial: ids[0].clone(),
        final_state: ids[n - 1].clone(),
        mu: vec![Distribution::point(ids[0].clone()), Distribution::point(ids[n - 1].clone())],
        population: 1,
    };
    let count = rng.gen_range(1..=max_rules);
    let mut rules = Vec::with_capacity(count);
    for k in 0..count {
        let from = rng.gen_range(0..n - 1);
        let to = rng.gen_range(from + 1..n);
        let mut rule = TransitionRule::new(
            format!("r{k:02}"),
            ids[from].clone(),
            ids[to].clone(),
            format!("u{k:02}"),
            T::from_count(rng.gen_range(0..=9)),
            rng.gen_range(1..=4),
        );
        if rng.gen_bool(0.3) {
            rule = rule.forbidding(ids[rng.gen_range(0..to)].clone());
        }
        rules.push(rule);
    }
    let (start, goal) = if rng.gen_bool(0.8) {
        (ids[0].clone(), ids[n - 1].clone())
    } else {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        (ids[a.min(b)].clone(), ids[a.max(b)].clone())
    };
    (diagram, rules, start, goal)
}

/// A one-parameter-or-two scale whose `p0` intervals are pairwise disjoint
/// and ordered, optionally with gaps, open ends and an extra `p1` constraint.
pub fn disjoint_scale<T: Scalar, R: Rng>(rng: &mut R) -> (Scale<T>, usize) {
    let n = rng.gen_range(1..=6usize);
    let dimension = rng.gen_range(1..=2usize);
    let mut cuts: Vec<u64> = (0..20).map(|c| c * 10).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<u64> = cuts.into_iter().take(n + 1).collect();
    cuts.sort_unstable();
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let lo = cuts[i];
        let mut hi = cuts[i + 1];
        if rng.gen_bool(0.3) {
            hi -= rng.gen_range(0..=5);
        }
        let mut preds = vec![if i == 0 && rng.gen_bool(0.3) {
            Predicate::below(0, T::from_count(hi))
        } else if i + 1 == n && rng.gen_bool(0.3) {
            Predicate::at_least(0, T::from_count(lo))
        } else {
            Predicate::between(0, T::from_count(lo), T::from_count(hi))
        }];
        if dimension == 2 && rng.gen_bool(0.5) {
            let a = rng.gen_range(0..50u64);
            preds.push(Predicate::between(1, T::from_count(a), T::from_count(a + rng.gen_range(1..50))));
        }
        entries.push(ScaleEntry {
            proposition: Proposition::new(format!("K{i}"), preds),
            state: StateId(format!("S{i}")),
            state_rank: i as u32,
        });
    }
    (Scale::new(entries), dimension)
}

/// A [`disjoint_scale`] with at least two propositions where one
/// proposition's `p0` interval is stretched into its successor's and the
/// `p1` constraints of both are dropped, so their truth domains share a box.
pub fn overlapped_scale<T: Scalar, R: Rng>(rng: &mut R) -> (Scale<T>, usize) {
    loop {
        let (mut scale, dim) = disjoint_scale::<T, R>(rng);
        if scale.entries.len() < 2 {
            continue;
        }
        let i = rng.gen_range(0..scale.entries.len() - 1);
        let next_lo = scale.entries[i + 1].proposition.predicates[0].lower.expect("successor has a lower bound");
        let a = &mut scale.entries[i].proposition;
        a.predicates.truncate(1);
        a.predicates[0].upper = Some(next_lo + T::one());
        scale.entries[i + 1].proposition.predicates.truncate(1);
        return (scale, dim);
    }
}

/// Random children and parent for aggregation tests, and a map that is
/// monotone by construction half of the time and a random block assignment
/// otherwise. Every combination of child states is covered exactly once.
pub fn random_aggregation<T: Scalar, R: Rng>(
    rng: &mut R,
) -> (Vec<CanonicalDiagram<T>>, CanonicalDiagram<T>, AggregationMap) {
    let horizon = rng.gen_range(1..=8);
    let parent_states = rng.gen_range(2..=4);
    let parent: CanonicalDiagram<T> = random_diagram(
        rng,
        &DiagramSpec { id: "P", state_prefix: "P", states: parent_states, horizon, population: 1 },
        2,
    );
    let k = rng.gen_range(1..=3);
    let children: Vec<CanonicalDiagram<T>> = (0..k)
        .map(|i| {
            let states = rng.gen_range(parent_states..=parent_states + 1);
            random_diagram(
                rng,
                &DiagramSpec { id: &format!("C{i}"), state_prefix: "S", states, horizon, population: 1 },
                2,
            )
        })
        .collect();
    let refs: Vec<&CanonicalDiagram<T>> = children.iter().collect();
    let map = if rng.gen_bool(0.5) {
        min_rule_map(&parent, &refs)
    } else {
        let ordered: Vec<StateId> = parent.ordered_states().iter().map(|s| s.id.clone()).collect();
        let mut blocks: BTreeMap<usize, Vec<Vec<StateId>>> = BTreeMap::new();
        for combo in all_combos(&refs) {
            blocks.entry(rng.gen_range(0..ordered.len())).or_default().push(combo);
        }
        AggregationMap {
            children: children.iter().map(|c| c.id.clone()).collect(),
            blocks: blocks
                .into_iter()
                .map(|(i, combos)| crate::hierarchy::AggregationBlock { parent_state: ordered[i].clone(), combos })
                .collect(),
        }
    };
    (children, parent, map)
}
