//! Reference recomputations. Each oracle works from raw inputs or the event
//! log with its own bookkeeping and shares no code path with the engine,
//! the metrics, the planner or the validators it is checked against.

use std::collections::{BTreeMap, BTreeSet};

use crate::classifier::Scale;
use crate::diagram::{ArcKind, CanonicalDiagram};
use crate::hierarchy::{AggregationMap, HsgdModel, Quorum};
use crate::ids::{ArcId, DiagramId, ObjectId, RuleId, StateId, Tick};
use crate::planner::{Budgets, TransitionRule};
use crate::scalar::Scalar;
use crate::scenario::{Cause, EventKind, SymbolClass, Trajectory};

/// Series rebuilt from the initial placement and the event log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replayed {
    pub occupancy: BTreeMap<StateId, Vec<u64>>,
    pub in_transit: Vec<u64>,
    pub eta: BTreeMap<ArcId, Vec<u64>>,
}

/// Occupancy, objects in transit and arc counters of one diagram mid-replay.
type Running = (BTreeMap<StateId, i64>, i64, BTreeMap<ArcId, u64>);

/// Replays departures, arrivals and backsteps tick by tick.
pub fn replay<T: Scalar>(model: &HsgdModel<T>, trajectory: &Trajectory) -> BTreeMap<DiagramId, Replayed> {
    let len = trajectory.horizon as usize + 1;
    let mut current: BTreeMap<&DiagramId, Running> = BTreeMap::new();
    let mut out: BTreeMap<DiagramId, Replayed> = BTreeMap::new();
    for d in model.diagrams.values() {
        let placed = &trajectory.initial[&d.id];
        let occ = d.states.iter().map(|s| (s.id.clone(), placed.get(&s.id).copied().unwrap_or(0) as i64)).collect();
        let eta = d.arcs.iter().map(|a| (a.id.clone(), 0)).collect();
        current.insert(&d.id, (occ, 0, eta));
        out.insert(
            d.id.clone(),
            Replayed {
                occupancy: d.states.iter().map(|s| (s.id.clone(), Vec::with_capacity(len))).collect(),
                in_transit: Vec::with_capacity(len),
                eta: d.arcs.iter().map(|a| (a.id.clone(), Vec::with_capacity(len))).collect(),
            },
        );
    }
    let mut events = trajectory.events.iter().peekable();
    for t in 0..len as Tick {
        while let Some(e) = events.next_if(|e| e.tick == t) {
            let (occ, transit, eta) = current.get_mut(&e.diagram).expect("event diagram");
            match &e.kind {
                EventKind::Departure { source, objects, .. } => {
                    *occ.get_mut(source).expect("source") -= objects.len() as i64;
                    *transit += objects.len() as i64;
                }
                EventKind::Arrival { arc, target, objects, .. } => {
                    *occ.get_mut(target).expect("target") += objects.len() as i64;
                    *transit -= objects.len() as i64;
                    *eta.get_mut(arc).expect("arc") += objects.len() as u64;
                }
                EventKind::Backstep { arc, source, target, objects } => {
                    *occ.get_mut(source).expect("source") -= objects.len() as i64;
                    *occ.get_mut(target).expect("target") += objects.len() as i64;
                    *eta.get_mut(arc).expect("arc") += objects.len() as u64;
                }
                _ => {}
            }
        }
        for (id, (occ, transit, eta)) in &current {
            let r = out.get_mut(*id).expect("replay slot");
            for (s, n) in occ {
                r.occupancy.get_mut(s).expect("state").push(u64::try_from(*n).expect("occupancy stays nonnegative"));
            }
            r.in_transit.push(u64::try_from(*transit).expect("transit stays nonnegative"));
            for (a, n) in eta {
                r.eta.get_mut(a).expect("arc").push(*n);
            }
        }
    }
    out
}

/// Scenario metrics recounted from the event log. Ratios are kept as
/// (numerator, denominator) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Recount<T> {
    pub complete: bool,
    pub redundancy_count: u64,
    pub omitted: (u64, u64),
    pub complexness: (u64, u64),
    pub resource_total: T,
}

/// 1-based interval of `tick` in `boundaries`, with an overflow bucket.
fn interval(boundaries: &[Tick], tick: Tick) -> usize {
    boundaries.iter().skip(1).position(|&b| tick <= b).map_or(boundaries.len(), |j| j + 1)
}

pub fn recount<T: Scalar>(model: &HsgdModel<T>, trajectory: &Trajectory) -> Recount<T> {
    let replayed = replay(model, trajectory);
    let complete = model.diagrams.values().all(|d| replayed[&d.id].occupancy[&d.final_state].contains(&d.population));

    // (event index, diagram, object, entered state) of every forward arrival
    let mut arrivals: Vec<(usize, &DiagramId, ObjectId, &StateId)> = Vec::new();
    let mut forward = 0u64;
    let mut coupled_forward = 0u64;
    let coupled: BTreeSet<&ArcId> = model.couplings.iter().flat_map(|c| c.children.iter().chain([&c.parent])).collect();
    for (i, e) in trajectory.events.iter().enumerate() {
        if let EventKind::Arrival { arc, target, objects, .. } = &e.kind {
            for &o in objects {
                arrivals.push((i, &e.diagram, o, target));
            }
            forward += objects.len() as u64;
            if coupled.contains(arc) {
                coupled_forward += objects.len() as u64;
            }
        }
    }
    let mut backsteps = 0u64;
    let mut omitted = 0u64;
    for (i, e) in trajectory.events.iter().enumerate() {
        if let EventKind::Backstep { source, objects, .. } = &e.kind {
            for &o in objects {
                backsteps += 1;
                if arrivals.iter().any(|(j, d, x, s)| *j < i && *d == &e.diagram && *x == o && *s == source) {
                    omitted += 1;
                }
            }
        }
    }

    let mut resource_total = T::zero();
    for e in &trajectory.events {
        if let EventKind::SymbolApplied { symbol, .. } = &e.kind {
            let s = model.symbols.iter().find(|s| &s.id == symbol).expect("applied symbol declared");
            resource_total = resource_total + s.cost;
        }
    }

    let mut redundancy_count = 0;
    for c in &model.couplings {
        let parent_diagram =
            model.diagrams.values().find(|d| d.arcs.iter().any(|a| a.id == c.parent)).expect("parent arc");
        let bounds = &parent_diagram.partition.boundaries;
        let quorum = match (c.quorum, model.rule.default_quorum) {
            (Some(q), _) => q,
            (None, Quorum::All) => c.children.len(),
            (None, Quorum::AtLeast(q)) => q.min(c.children.len()),
        };
        let general: BTreeSet<_> = model
            .symbols
            .iter()
            .filter(|s| s.class == SymbolClass::General && s.arc == c.parent)
            .map(|s| &s.id)
            .collect();
        let individual: BTreeSet<_> = model
            .symbols
            .iter()
            .filter(|s| s.class == SymbolClass::Individual && c.children.contains(&s.arc))
            .map(|s| &s.id)
            .collect();
        let mut windows: BTreeMap<usize, (bool, bool, BTreeSet<&ArcId>)> = BTreeMap::new();
        for e in &trajectory.events {
            let w = windows.entry(interval(bounds, e.tick)).or_default();
            match &e.kind {
                EventKind::SymbolApplied { symbol, .. } if general.contains(symbol) => w.0 = true,
                EventKind::SymbolApplied { symbol, .. } if individual.contains(symbol) => w.1 = true,
                EventKind::Arrival { arc, cause, .. } if *cause != Cause::Downward && c.children.contains(arc) => {
                    w.2.insert(arc);
                }
                _ => {}
            }
        }
        redundancy_count += windows.values().filter(|(g, i, done)| *g && (*i || done.len() >= quorum)).count() as u64;
    }

    Recount {
        complete,
        redundancy_count,
        omitted: (omitted, forward + backsteps),
        complexness: (coupled_forward, forward),
        resource_total,
    }
}

/// Every simple rule chain from `start` to `goal` that respects the
/// forbidden-state guards and the budgets, with its (resource, time).
pub fn all_chains<T: Scalar>(
    rules: &[TransitionRule<T>],
    start: &StateId,
    goal: &StateId,
    budgets: &Budgets<T>,
) -> Vec<(Vec<RuleId>, T, Tick)> {
    fn walk<T: Scalar>(
        rules: &[TransitionRule<T>],
        goal: &StateId,
        path: &mut Vec<usize>,
        visited: &mut Vec<StateId>,
        out: &mut Vec<(Vec<RuleId>, T, Tick)>,
    ) {
        let here = visited.last().expect("start").clone();
        if &here == goal {
            let res = path.iter().fold(T::zero(), |a, &i| a + rules[i].resource);
            let time = path.iter().map(|&i| rules[i].duration).sum();
            out.push((path.iter().map(|&i| rules[i].id.clone()).collect(), res, time));
            return;
        }
        for (i, r) in rules.iter().enumerate() {
            if r.from != here || r.duration == 0 || visited.contains(&r.to) {
                continue;
            }
            let banned = path.iter().chain([&i]).any(|&k| rules[k].forbidden.as_ref() == Some(&r.to));
            if banned {
                continue;
            }
            path.push(i);
            visited.push(r.to.clone());
            walk(rules, goal, path, visited, out);
            visited.pop();
            path.pop();
        }
    }
    let mut out = Vec::new();
    walk(rules, goal, &mut Vec::new(), &mut vec![start.clone()], &mut out);
    out.retain(|(_, r, t)| budgets.resource.is_none_or(|b| *r <= b) && budgets.time.is_none_or(|b| *t <= b));
    out
}

/// Chains not dominated in (resource, time); chains with equal costs are all kept.
pub fn pareto_chains<T: Scalar>(
    rules: &[TransitionRule<T>],
    start: &StateId,
    goal: &StateId,
    budgets: &Budgets<T>,
) -> BTreeSet<Vec<RuleId>> {
    let all = all_chains(rules, start, goal, budgets);
    all.iter()
        .filter(|(_, r, t)| !all.iter().any(|(_, r2, t2)| r2 <= r && t2 <= t && (r2 != r || t2 != t)))
        .map(|(ids, _, _)| ids.clone())
        .collect()
}

/// The state of the first scale entry all of whose bounds hold for `x`.
pub fn classify_direct<T: Scalar>(scale: &Scale<T>, x: &[T]) -> Option<StateId> {
    scale
        .entries
        .iter()
        .find(|e| {
            e.proposition.predicates.iter().all(|p| {
                let v = x[p.param];
                let above = match p.lower {
                    Some(lo) => v >= lo,
                    None => true,
                };
                let below = match p.upper {
                    Some(hi) => v < hi,
                    None => true,
                };
                above && below
            })
        })
        .map(|e| e.state.clone())
}

fn label(combo: &[StateId]) -> String {
    format!("({})", combo.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(","))
}

/// Ordered pairs `(c, c′)` of mapped combinations with `c ≤ c′`
/// componentwise in rank and `parent(c)` ranked above `parent(c′)`.
pub fn monotonicity_violations<T: Scalar>(
    children: &[CanonicalDiagram<T>],
    map: &AggregationMap,
    parent: &CanonicalDiagram<T>,
) -> BTreeSet<(String, String)> {
    let rank_in = |d: &CanonicalDiagram<T>, s: &StateId| d.states.iter().find(|x| &x.id == s).map(|x| x.rank);
    let mut mapped: Vec<(Vec<u32>, u32, &Vec<StateId>)> = Vec::new();
    for b in &map.blocks {
        let Some(pr) = rank_in(parent, &b.parent_state) else { continue };
        for c in &b.combos {
            let ranks: Option<Vec<u32>> = c.iter().zip(children).map(|(s, d)| rank_in(d, s)).collect();
            if let Some(ranks) = ranks {
                mapped.push((ranks, pr, c));
            }
        }
    }
    let mut out = BTreeSet::new();
    for (ra, pa, ca) in &mapped {
        for (rb, pb, cb) in &mapped {
            if ca != cb && ra.iter().zip(rb).all(|(x, y)| x <= y) && pa > pb {
                out.insert((label(ca), label(cb)));
            }
        }
    }
    out
}

/// Σ occupancy + in transit equals the population at every recorded tick.
pub fn conserved<T: Scalar>(model: &HsgdModel<T>, trajectory: &Trajectory) -> bool {
    model.diagrams.values().all(|d| {
        let dy = &trajectory.diagrams[&d.id].dynamics;
        (0..=trajectory.horizon as usize)
            .all(|t| dy.occupancy.values().map(|s| s[t]).sum::<u64>() + dy.in_transit[t] == d.population)
    })
}

/// Every forward counter of the trajectory stays at zero.
pub fn forward_counters_zero<T: Scalar>(model: &HsgdModel<T>, trajectory: &Trajectory) -> bool {
    model.diagrams.values().all(|d| {
        d.arcs
            .iter()
            .filter(|a| a.kind == ArcKind::Forward)
            .all(|a| trajectory.diagrams[&d.id].dynamics.eta[&a.id].iter().all(|&n| n == 0))
    })
}
