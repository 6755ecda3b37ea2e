//! Object-level tick engine.
//!
//! Within tick `t` the engine
//! 1. completes arrivals due at `t`,
//! 2. applies individual symbols (ascending id), moving every resting object
//!    in the arc's source onto the arc,
//! 3. applies general symbols (ascending id), firing the coupling parent arc
//!    and, recursively, its constituent child arcs,
//! 4. propagates upward for every coupling whose quorum of child arcs
//!    completed within the parent's current interval,
//! 5. moves objects whose dwell reached their state's limit along the
//!    lowest-ranked enabled backstep arc,
//!
//! and then records end-of-tick occupancy, transit and counters.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{validate_scenario, BackstepGuard, ControlScenario, ScenarioError, SymbolClass, TimeDiagram};
use crate::diagram::Arc;
use crate::dynamics::ActualDynamics;
use crate::hierarchy::HsgdModel;
use crate::ids::{ArcId, DiagramId, ObjectId, ScenarioId, StateId, SymbolId, Tick};
use crate::scalar::Scalar;

/// Why an object left its state on a forward arc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cause {
    /// An individual symbol addressed the arc.
    Symbol,
    /// A general symbol addressed the arc.
    General,
    /// A general symbol addressed a coupling above this arc.
    Downward,
    /// The arc's coupling reached its quorum.
    Propagation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum EventKind {
    /// `moved == 0` marks a vacuous application.
    SymbolApplied {
        symbol: SymbolId,
        arc: ArcId,
        moved: u64,
    },
    Departure {
        arc: ArcId,
        source: StateId,
        target: StateId,
        cause: Cause,
        arrival: Tick,
        objects: Vec<ObjectId>,
    },
    Arrival {
        arc: ArcId,
        source: StateId,
        target: StateId,
        cause: Cause,
        objects: Vec<ObjectId>,
    },
    Backstep {
        arc: ArcId,
        source: StateId,
        target: StateId,
        objects: Vec<ObjectId>,
    },
    Propagation {
        coupling: ArcId,
        interval: usize,
        children: Vec<ArcId>,
        objects: Vec<ObjectId>,
    },
    Redundancy {
        coupling: ArcId,
        interval: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub tick: Tick,
    pub diagram: DiagramId,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transit {
    pub arc: ArcId,
    pub target: StateId,
    pub arrival: Tick,
    pub cause: Cause,
}

/// One object. While in transit `state` still names the source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimObject {
    pub state: StateId,
    pub entered: Tick,
    pub transit: Option<Transit>,
    /// States this object entered by completing a forward transition.
    pub advanced_into: BTreeSet<StateId>,
}

impl SimObject {
    fn resting_in(&self, s: &StateId) -> bool {
        self.transit.is_none() && &self.state == s
    }
}

/// Per-coupling bookkeeping for the parent's current interval.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CouplingWindow {
    pub interval: usize,
    /// Child arcs with at least one eligible completion in the interval.
    pub completed: BTreeSet<ArcId>,
    pub individual_on_child: bool,
    pub general_applied: bool,
    pub parent_fired: bool,
    pub redundant: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimState {
    /// The tick the next call to [`step`] must process.
    pub next_tick: Tick,
    pub objects: BTreeMap<DiagramId, Vec<SimObject>>,
    pub eta: BTreeMap<DiagramId, BTreeMap<ArcId, u64>>,
    pub windows: BTreeMap<ArcId, CouplingWindow>,
    pub guards: Vec<BackstepGuard>,
    pub redundancy_count: u64,
}

impl SimState {
    /// Objects placed by the apportioned `μ0`, ids assigned in rank order.
    pub fn new<T: Scalar>(model: &HsgdModel<T>, guards: Vec<BackstepGuard>) -> Self {
        let mut objects = BTreeMap::new();
        let mut eta = BTreeMap::new();
        for (id, d) in &model.diagrams {
            let counts = d.initial_counts();
            let mut objs = Vec::new();
            for s in d.ordered_states() {
                for _ in 0..counts.get(&s.id).copied().unwrap_or(0) {
                    objs.push(SimObject {
                        state: s.id.clone(),
                        entered: 0,
                        transit: None,
                        advanced_into: BTreeSet::new(),
                    });
                }
            }
            objects.insert(id.clone(), objs);
            eta.insert(id.clone(), d.arcs.iter().map(|a| (a.id.clone(), 0)).collect());
        }
        let windows = model.couplings.iter().map(|c| (c.parent.clone(), CouplingWindow::default())).collect();
        Self { next_tick: 0, objects, eta, windows, guards, redundancy_count: 0 }
    }

    pub fn occupancy(&self, diagram: &DiagramId, state: &StateId) -> u64 {
        self.objects.get(diagram).map_or(0, |o| o.iter().filter(|x| x.resting_in(state)).count() as u64)
    }

    pub fn in_transit(&self, diagram: &DiagramId) -> u64 {
        self.objects.get(diagram).map_or(0, |o| o.iter().filter(|x| x.transit.is_some()).count() as u64)
    }

    fn check<T: Scalar>(&self, model: &HsgdModel<T>) -> Result<(), ScenarioError> {
        for (id, d) in &model.diagrams {
            let objs =
                self.objects.get(id).ok_or_else(|| ScenarioError::InconsistentState(format!("no objects for {id}")))?;
            let resting: u64 = d.states.iter().map(|s| self.occupancy(id, &s.id)).sum();
            if resting + self.in_transit(id) != d.population || objs.len() as u64 != d.population {
                return Err(ScenarioError::InconsistentState(format!(
                    "diagram {id} accounts for {} objects, population {}",
                    resting + self.in_transit(id),
                    d.population
                )));
            }
        }
        Ok(())
    }
}

/// Moves every resting object in `arc.source` onto `arc`.
fn depart(objs: &mut [SimObject], arc: &Arc, tick: Tick, cause: Cause) -> Vec<ObjectId> {
    let mut moved = Vec::new();
    for (i, o) in objs.iter_mut().enumerate() {
        if o.resting_in(&arc.source) {
            o.transit =
                Some(Transit { arc: arc.id.clone(), target: arc.target.clone(), arrival: tick + arc.theta, cause });
            moved.push(i as ObjectId);
        }
    }
    moved
}

fn departure_event(tick: Tick, diagram: &DiagramId, arc: &Arc, cause: Cause, objects: Vec<ObjectId>) -> Event {
    Event {
        tick,
        diagram: diagram.clone(),
        kind: EventKind::Departure {
            arc: arc.id.clone(),
            source: arc.source.clone(),
            target: arc.target.clone(),
            cause,
            arrival: tick + arc.theta,
            objects,
        },
    }
}

struct Ctx<'m, T> {
    model: &'m HsgdModel<T>,
    /// child arc → coupling parent arc
    child_of: BTreeMap<&'m ArcId, &'m ArcId>,
}

impl<'m, T: Scalar> Ctx<'m, T> {
    fn new(model: &'m HsgdModel<T>) -> Self {
        let child_of = model.couplings.iter().flat_map(|c| c.children.iter().map(move |k| (k, &c.parent))).collect();
        Self { model, child_of }
    }

    fn arc(&self, id: &ArcId) -> Result<(&'m DiagramId, &'m Arc), ScenarioError> {
        self.model
            .locate_arc(id)
            .map(|(d, a)| (&d.id, a))
            .ok_or_else(|| ScenarioError::InconsistentState(format!("arc {id} not in model")))
    }
}

/// Fires the children of coupling `parent` and, below them, their own
/// children.
fn fire_downward<T: Scalar>(
    ctx: &Ctx<'_, T>,
    state: &mut SimState,
    parent: &ArcId,
    tick: Tick,
    events: &mut Vec<Event>,
    depth: usize,
) -> Result<(), ScenarioError> {
    let Some(c) = ctx.model.coupling(parent) else { return Ok(()) };
    if depth > ctx.model.couplings.len() {
        return Err(ScenarioError::InconsistentState(format!("coupling cycle through {parent}")));
    }
    for child in &c.children {
        let (d, arc) = ctx.arc(child)?;
        let objs = state.objects.get_mut(d).expect("diagram objects");
        let moved = depart(objs, arc, tick, Cause::Downward);
        if !moved.is_empty() {
            events.push(departure_event(tick, d, arc, Cause::Downward, moved));
        }
        if let Some(w) = state.windows.get_mut(child) {
            w.parent_fired = true;
        }
        fire_downward(ctx, state, child, tick, events, depth + 1)?;
    }
    Ok(())
}

fn advance<T: Scalar>(
    model: &HsgdModel<T>,
    state: &mut SimState,
    tick: Tick,
    symbols: &BTreeSet<SymbolId>,
) -> Result<Vec<Event>, ScenarioError> {
    if tick != state.next_tick {
        return Err(ScenarioError::InconsistentState(format!("expected tick {}, got {tick}", state.next_tick)));
    }
    let mut applied = Vec::with_capacity(symbols.len());
    for s in symbols {
        applied.push(model.symbol(s).ok_or_else(|| ScenarioError::UnknownSymbol(s.clone()))?);
    }
    state.check(model)?;
    let ctx = Ctx::new(model);
    let mut events = Vec::new();

    for c in &model.couplings {
        let (pd, _) = ctx.arc(&c.parent)?;
        let interval = model.diagrams[pd].partition.interval_of(tick);
        let w = state.windows.entry(c.parent.clone()).or_default();
        if w.interval != interval {
            *w = CouplingWindow { interval, ..Default::default() };
        }
    }

    // 1. arrivals
    for (id, objs) in state.objects.iter_mut() {
        let mut done: BTreeMap<(ArcId, Cause), Vec<ObjectId>> = BTreeMap::new();
        for (i, o) in objs.iter_mut().enumerate() {
            let Some(tr) = o.transit.as_ref().filter(|tr| tr.arrival == tick) else { continue };
            done.entry((tr.arc.clone(), tr.cause)).or_default().push(i as ObjectId);
            o.state = tr.target.clone();
            o.advanced_into.insert(tr.target.clone());
            o.entered = tick;
            o.transit = None;
        }
        for ((arc_id, cause), objects) in done {
            let arc = model.diagrams[id].arc(&arc_id).expect("arc of own diagram");
            *state.eta.get_mut(id).expect("diagram counters").get_mut(&arc_id).expect("arc counter") +=
                objects.len() as u64;
            if cause != Cause::Downward {
                if let Some(parent) = ctx.child_of.get(&arc_id) {
                    state.windows.get_mut(*parent).expect("window").completed.insert(arc_id.clone());
                }
            }
            events.push(Event {
                tick,
                diagram: id.clone(),
                kind: EventKind::Arrival {
                    arc: arc_id,
                    source: arc.source.clone(),
                    target: arc.target.clone(),
                    cause,
                    objects,
                },
            });
        }
    }

    // 2. individual symbols, then 3. general symbols
    for class in [SymbolClass::Individual, SymbolClass::General] {
        for sym in applied.iter().filter(|s| s.class == class) {
            let (d, arc) = ctx.arc(&sym.arc)?;
            let cause = if class == SymbolClass::General { Cause::General } else { Cause::Symbol };
            let moved = depart(state.objects.get_mut(d).expect("diagram objects"), arc, tick, cause);
            events.push(Event {
                tick,
                diagram: d.clone(),
                kind: EventKind::SymbolApplied {
                    symbol: sym.id.clone(),
                    arc: arc.id.clone(),
                    moved: moved.len() as u64,
                },
            });
            if !moved.is_empty() {
                events.push(departure_event(tick, d, arc, cause, moved));
            }
            match class {
                SymbolClass::Individual => {
                    if let Some(parent) = ctx.child_of.get(&arc.id) {
                        state.windows.get_mut(*parent).expect("window").individual_on_child = true;
                    }
                }
                SymbolClass::General => {
                    if let Some(w) = state.windows.get_mut(&arc.id) {
                        w.general_applied = true;
                        w.parent_fired = true;
                    }
                    fire_downward(&ctx, state, &arc.id, tick, &mut events, 0)?;
                }
            }
        }
    }

    // 4. upward propagation
    for c in &model.couplings {
        let quorum = model.quorum(c);
        let w = &state.windows[&c.parent];
        if w.parent_fired || w.completed.len() < quorum {
            continue;
        }
        let (interval, children) = (w.interval, w.completed.iter().cloned().collect());
        let (d, arc) = ctx.arc(&c.parent)?;
        let moved = depart(state.objects.get_mut(d).expect("diagram objects"), arc, tick, Cause::Propagation);
        state.windows.get_mut(&c.parent).expect("window").parent_fired = true;
        events.push(Event {
            tick,
            diagram: d.clone(),
            kind: EventKind::Propagation { coupling: c.parent.clone(), interval, children, objects: moved.clone() },
        });
        if !moved.is_empty() {
            events.push(departure_event(tick, d, arc, Cause::Propagation, moved));
        }
    }

    // redundancy: a general symbol co-occurring with child activity in one interval
    for c in &model.couplings {
        let quorum = model.quorum(c);
        let w = state.windows.get_mut(&c.parent).expect("window");
        if !w.redundant && w.general_applied && (w.individual_on_child || w.completed.len() >= quorum) {
            w.redundant = true;
            state.redundancy_count += 1;
            let (d, _) = ctx.arc(&c.parent)?;
            events.push(Event {
                tick,
                diagram: d.clone(),
                kind: EventKind::Redundancy { coupling: c.parent.clone(), interval: w.interval },
            });
        }
    }

    // 5. dwell-limit backsteps
    for (id, objs) in state.objects.iter_mut() {
        let d = &model.diagrams[id];
        let mut backsteps: Vec<&Arc> = d.backstep_arcs().collect();
        backsteps.sort_by_key(|a| (d.rank(&a.target), a.id.clone()));
        let mut moved: BTreeMap<&ArcId, Vec<ObjectId>> = BTreeMap::new();
        for (i, o) in objs.iter_mut().enumerate() {
            if o.transit.is_some() {
                continue;
            }
            let Some(limit) = d.state(&o.state).and_then(|s| s.dwell_limit) else { continue };
            if tick < o.entered || tick - o.entered < limit {
                continue;
            }
            let chosen = backsteps
                .iter()
                .find(|a| a.source == o.state && !state.guards.iter().any(|g| g.active(id, &a.target, tick)));
            if let Some(a) = chosen {
                o.state = a.target.clone();
                o.entered = tick;
                moved.entry(&a.id).or_default().push(i as ObjectId);
            }
        }
        for (arc_id, objects) in moved {
            let arc = d.arc(arc_id).expect("backstep arc");
            *state.eta.get_mut(id).expect("diagram counters").get_mut(arc_id).expect("arc counter") +=
                objects.len() as u64;
            events.push(Event {
                tick,
                diagram: id.clone(),
                kind: EventKind::Backstep {
                    arc: arc_id.clone(),
                    source: arc.source.clone(),
                    target: arc.target.clone(),
                    objects,
                },
            });
        }
    }

    state.check(model)?;
    state.next_tick = tick + 1;
    Ok(events)
}

/// Processes one tick and returns the next state with the tick's events.
pub fn step<T: Scalar>(
    model: &HsgdModel<T>,
    state: &SimState,
    tick: Tick,
    symbols: &BTreeSet<SymbolId>,
) -> Result<(SimState, Vec<Event>), ScenarioError> {
    let mut next = state.clone();
    let events = advance(model, &mut next, tick, symbols)?;
    Ok((next, events))
}

/// Recorded series of one diagram over a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagramTrace {
    pub dynamics: ActualDynamics,
    /// Objects in transit grouped by the state they left.
    pub transit_by_source: BTreeMap<StateId, Vec<u64>>,
    /// `[tick][object]`: the state each object rests in or is leaving.
    #[serde(skip)]
    pub attained: Vec<Vec<StateId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub model: String,
    pub scenario: ScenarioId,
    pub horizon: Tick,
    /// Counts placed before tick 0 is processed.
    pub initial: BTreeMap<DiagramId, BTreeMap<StateId, u64>>,
    pub diagrams: BTreeMap<DiagramId, DiagramTrace>,
    pub events: Vec<Event>,
    pub redundancy_count: u64,
}

impl Trajectory {
    pub fn dynamics(&self, diagram: &DiagramId) -> Option<&ActualDynamics> {
        self.diagrams.get(diagram).map(|t| &t.dynamics)
    }

    /// `[object][tick]` attained states of `diagram`.
    pub fn object_histories(&self, diagram: &DiagramId) -> Vec<Vec<StateId>> {
        let Some(t) = self.diagrams.get(diagram) else { return Vec::new() };
        let objects = t.attained.first().map_or(0, Vec::len);
        (0..objects).map(|o| t.attained.iter().map(|row| row[o].clone()).collect()).collect()
    }

    /// Symbols applied at each tick, in application order.
    pub fn applied(&self) -> BTreeMap<Tick, Vec<SymbolId>> {
        let mut out: BTreeMap<Tick, Vec<SymbolId>> = BTreeMap::new();
        for e in &self.events {
            if let EventKind::SymbolApplied { symbol, .. } = &e.kind {
                out.entry(e.tick).or_default().push(symbol.clone());
            }
        }
        out
    }
}

fn record<T: Scalar>(
    model: &HsgdModel<T>,
    state: &SimState,
    tick: Tick,
    traces: &mut BTreeMap<DiagramId, DiagramTrace>,
) {
    let t = tick as usize;
    for (id, d) in &model.diagrams {
        let trace = traces.get_mut(id).expect("trace");
        let objs = &state.objects[id];
        for s in &d.states {
            trace.dynamics.occupancy.get_mut(&s.id).expect("state series")[t] = 0;
            trace.transit_by_source.get_mut(&s.id).expect("state series")[t] = 0;
        }
        let mut transit = 0;
        for o in objs {
            if o.transit.is_some() {
                transit += 1;
                trace.transit_by_source.get_mut(&o.state).expect("state series")[t] += 1;
            } else {
                trace.dynamics.occupancy.get_mut(&o.state).expect("state series")[t] += 1;
            }
        }
        trace.dynamics.in_transit[t] = transit;
        for (arc, n) in &state.eta[id] {
            trace.dynamics.eta.get_mut(arc).expect("arc series")[t] = *n;
        }
        trace.attained.push(objs.iter().map(|o| o.state.clone()).collect());
    }
}

fn simulate<T: Scalar>(
    model: &HsgdModel<T>,
    id: ScenarioId,
    schedule: &TimeDiagram,
    horizon: Tick,
    guards: Vec<BackstepGuard>,
) -> Result<Trajectory, ScenarioError> {
    let mut state = SimState::new(model, guards);
    let mut traces = BTreeMap::new();
    let mut initial = BTreeMap::new();
    for (did, d) in &model.diagrams {
        let counts: BTreeMap<StateId, u64> =
            d.states.iter().map(|s| (s.id.clone(), state.occupancy(did, &s.id))).collect();
        let mut dynamics = ActualDynamics::from_counts(d, &counts, horizon);
        dynamics.population = d.population;
        let transit_by_source = d.states.iter().map(|s| (s.id.clone(), vec![0; horizon as usize + 1])).collect();
        traces.insert(did.clone(), DiagramTrace { dynamics, transit_by_source, attained: Vec::new() });
        initial.insert(did.clone(), counts);
    }
    let mut events = Vec::new();
    for tick in 0..=horizon {
        events.extend(advance(model, &mut state, tick, &schedule.symbols_at(tick))?);
        record(model, &state, tick, &mut traces);
    }
    Ok(Trajectory {
        model: model.name.clone(),
        scenario: id,
        horizon,
        initial,
        diagrams: traces,
        events,
        redundancy_count: state.redundancy_count,
    })
}

/// Folds [`step`] over ticks `0..=horizon`.
pub fn run<T: Scalar>(model: &HsgdModel<T>, scenario: &ControlScenario<T>) -> Result<Trajectory, ScenarioError> {
    validate_scenario(model, scenario)?;
    simulate(model, scenario.id.clone(), &scenario.schedule, scenario.horizon, scenario.guards.clone())
}

/// The run without control input.
pub fn run_inertial<T: Scalar>(model: &HsgdModel<T>, horizon: Tick) -> Trajectory {
    simulate(model, "inertial".into(), &TimeDiagram::new(), horizon, Vec::new())
        .expect("an uncontrolled run only moves objects between states of their own diagram")
}
