//! Actual dynamics: per-arc transition counters and per-state occupancy series.
//!
//! Series are indexed by tick `0..=horizon` and record the situation at the
//! end of each tick. An object that departs at tick `t` along an arc with
//! transit time `θ` is in transit during `t..t+θ` and counted in the target
//! (and in the arc's counter) from `t+θ` on.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagram::{CanonicalDiagram, Distribution};
use crate::ids::{ArcId, DiagramId, StateId, Tick};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DynamicsError {
    #[error("unknown arc {0}")]
    UnknownArc(ArcId),
    #[error("arc {arc} moves {requested} objects at tick {tick} but only {available} are present")]
    InsufficientOccupancy { arc: ArcId, tick: Tick, available: u64, requested: u64 },
    #[error("tick {0} outside the run horizon")]
    TickOutOfRange(i64),
    #[error("distributions range over different state sets (offending state {0})")]
    StateSetMismatch(StateId),
    #[error("dynamics belong to diagram {found}, expected {expected}")]
    DiagramMismatch { expected: DiagramId, found: DiagramId },
}

/// A batch of objects leaving an arc's source at `departure`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationEvent {
    pub arc: ArcId,
    pub count: u64,
    pub departure: Tick,
}

impl PopulationEvent {
    pub fn new(arc: impl Into<ArcId>, count: u64, departure: Tick) -> Self {
        Self { arc: arc.into(), count, departure }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActualDynamics {
    pub diagram: DiagramId,
    pub population: u64,
    pub horizon: Tick,
    /// Cumulative completed transitions per arc.
    pub eta: BTreeMap<ArcId, Vec<u64>>,
    /// Objects resting in each state.
    pub occupancy: BTreeMap<StateId, Vec<u64>>,
    /// Objects currently traversing some arc.
    pub in_transit: Vec<u64>,
}

impl ActualDynamics {
    /// Dynamics where nothing happens: the `μ0` apportionment held until `horizon`.
    pub fn initial<T: Scalar>(diagram: &CanonicalDiagram<T>, horizon: Tick) -> Self {
        Self::from_counts(diagram, &diagram.initial_counts(), horizon)
    }

    pub fn from_counts<T: Scalar>(
        diagram: &CanonicalDiagram<T>,
        counts: &BTreeMap<StateId, u64>,
        horizon: Tick,
    ) -> Self {
        let len = horizon as usize + 1;
        let occupancy =
            diagram.states.iter().map(|s| (s.id.clone(), vec![counts.get(&s.id).copied().unwrap_or(0); len])).collect();
        let eta = diagram.arcs.iter().map(|a| (a.id.clone(), vec![0; len])).collect();
        Self {
            diagram: diagram.id.clone(),
            population: counts.values().sum(),
            horizon,
            eta,
            occupancy,
            in_transit: vec![0; len],
        }
    }

    pub fn occupancy_at(&self, state: &StateId, tick: Tick) -> u64 {
        self.occupancy.get(state).and_then(|s| s.get(tick as usize)).copied().unwrap_or(0)
    }

    pub fn eta_at(&self, arc: &ArcId, tick: Tick) -> u64 {
        self.eta.get(arc).and_then(|s| s.get(tick as usize)).copied().unwrap_or(0)
    }

    fn check_tick(&self, tick: i64) -> Result<Tick, DynamicsError> {
        if tick < 0 || tick > self.horizon as i64 {
            Err(DynamicsError::TickOutOfRange(tick))
        } else {
            Ok(tick as Tick)
        }
    }

    /// Applies departures in tick order and returns the updated dynamics.
    pub fn advance_population<T: Scalar>(
        &self,
        diagram: &CanonicalDiagram<T>,
        events: &[PopulationEvent],
    ) -> Result<ActualDynamics, DynamicsError> {
        if diagram.id != self.diagram {
            return Err(DynamicsError::DiagramMismatch { expected: self.diagram.clone(), found: diagram.id.clone() });
        }
        let mut next = self.clone();
        let mut ordered: Vec<&PopulationEvent> = events.iter().collect();
        ordered.sort_by_key(|e| e.departure);
        let end = self.horizon as usize + 1;
        for ev in ordered {
            let arc = diagram.arc(&ev.arc).ok_or_else(|| DynamicsError::UnknownArc(ev.arc.clone()))?;
            let dep = next.check_tick(ev.departure as i64)? as usize;
            let source = next.occupancy.entry(arc.source.clone()).or_insert_with(|| vec![0; end]);
            // a later departure already booked may depend on these objects
            let available = source[dep..].iter().copied().min().unwrap_or(0);
            if available < ev.count {
                return Err(DynamicsError::InsufficientOccupancy {
                    arc: ev.arc.clone(),
                    tick: ev.departure,
                    available,
                    requested: ev.count,
                });
            }
            for v in &mut source[dep..] {
                *v -= ev.count;
            }
            let arrival = dep + arc.theta as usize;
            for v in &mut next.in_transit[dep..arrival.min(end)] {
                *v += ev.count;
            }
            if arrival < end {
                let target = next.occupancy.entry(arc.target.clone()).or_insert_with(|| vec![0; end]);
                for v in &mut target[arrival..] {
                    *v += ev.count;
                }
                let eta = next.eta.entry(arc.id.clone()).or_insert_with(|| vec![0; end]);
                for v in &mut eta[arrival..] {
                    *v += ev.count;
                }
            }
        }
        Ok(next)
    }

    /// Observed occupancy fractions; objects in transit are left out, so the
    /// result sums to `(population − in_transit) / population`.
    pub fn distribution_at<T: Scalar>(&self, tick: i64) -> Result<Distribution<T>, DynamicsError> {
        let t = self.check_tick(tick)?;
        if self.population == 0 {
            return Ok(Distribution::default());
        }
        let pop = T::from_count(self.population);
        Ok(Distribution(
            self.occupancy
                .iter()
                .filter_map(|(s, series)| {
                    let n = series[t as usize];
                    (n > 0).then(|| (s.clone(), T::from_count(n) / pop))
                })
                .collect(),
        ))
    }

    /// Fraction of the population in transit at `tick`.
    pub fn transit_fraction_at<T: Scalar>(&self, tick: i64) -> Result<T, DynamicsError> {
        let t = self.check_tick(tick)?;
        if self.population == 0 {
            return Ok(T::zero());
        }
        Ok(T::from_count(self.in_transit[t as usize]) / T::from_count(self.population))
    }

    /// Σ occupancy + in_transit at `tick`.
    pub fn accounted_at(&self, tick: Tick) -> u64 {
        self.occupancy.values().map(|s| s[tick as usize]).sum::<u64>() + self.in_transit[tick as usize]
    }
}

/// L1 distance `Σ|expected − observed|` over `states`; lies in `[0, 2]` for
/// distributions and is zero iff they agree.
pub fn compare_distributions<T: Scalar>(
    expected: &Distribution<T>,
    observed: &Distribution<T>,
    states: &BTreeSet<StateId>,
) -> Result<T, DynamicsError> {
    for s in expected.0.keys().chain(observed.0.keys()) {
        if !states.contains(s) {
            return Err(DynamicsError::StateSetMismatch(s.clone()));
        }
    }
    Ok(states.iter().fold(T::zero(), |acc, s| acc + (expected.get(s) - observed.get(s)).abs()))
}
