use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rustc_hash::FxHashMap;
use serde::Serialize;

use super::{check_horizon, Counters, Engine, InitialCondition, SimError, SimParams};
use crate::lattice::{direction_parts, Coords, EdgeId, Geometry, Vertex};
use crate::rng::{exp_variate, stream, uniform, SimRng};

/// State of a revealed edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeKnowledge {
    pub open: bool,
    pub next_refresh: f64,
    pub generation: u64,
}

#[derive(Debug, Clone)]
enum EventKind {
    WalkerAttempt,
    EdgeRefresh { edge: EdgeId, generation: u64 },
}

#[derive(Debug, Clone)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

// Min-heap order on (time, seq).
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

#[derive(Debug, Clone, PartialEq)]
pub enum EventOutcome {
    Attempt {
        time: f64,
        direction: usize,
        edge: EdgeId,
        /// The edge was unrevealed and got its state drawn at this attempt.
        newly_revealed: bool,
        open: bool,
        moved: bool,
    },
    Refresh {
        time: f64,
        edge: EdgeId,
    },
    /// A refresh event whose generation no longer matches; discarded.
    StaleRefresh {
        time: f64,
    },
}

impl EventOutcome {
    pub fn time(&self) -> f64 {
        match self {
            EventOutcome::Attempt { time, .. }
            | EventOutcome::Refresh { time, .. }
            | EventOutcome::StaleRefresh { time } => *time,
        }
    }

    pub fn moved(&self) -> bool {
        matches!(self, EventOutcome::Attempt { moved: true, .. })
    }
}

/// One row of a trajectory dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub time: f64,
    pub walker: Vec<i64>,
    pub revealed: usize,
}

/// Lazy-revelation engine.
///
/// Randomness is consumed in a fixed order. At init: walker position (uniform
/// start only), then each pinned edge's refresh clock in edge order, then the
/// first attempt clock. At a walker attempt: direction, then (if the edge was
/// unrevealed) its state and its refresh clock, then the next attempt clock.
/// A forced revelation draws state then refresh clock, per edge in direction
/// order.
#[derive(Debug, Clone)]
pub struct SimState {
    params: SimParams,
    time: f64,
    walker: Vertex,
    lifted: Coords,
    revealed: FxHashMap<EdgeId, EdgeKnowledge>,
    queue: BinaryHeap<Event>,
    counters: Counters,
    rng: SimRng,
    seq: u64,
    next_generation: u64,
    span_anchor: Coords,
    span_max: u64,
    warnings: Vec<String>,
}

impl SimState {
    pub fn init(params: &SimParams) -> Result<Self, SimError> {
        let warnings = params.validate()?;
        let g = params.geometry;
        let mut rng = stream(params.seed);
        let walker = match &params.initial {
            InitialCondition::StationaryUniformWalker => {
                let count = g.vertex_count().expect("validated torus");
                g.vertex_from_index(rng.random_range(0..count))
            }
            InitialCondition::StationaryWalkerAt(w)
            | InitialCondition::ExplicitAll { walker: w, .. }
            | InitialCondition::FinitePattern { walker: w, .. } => w.clone(),
        };
        let zero: Coords = smallvec::smallvec![0; g.dim()];
        let mut state = SimState {
            params: params.clone(),
            time: 0.0,
            walker,
            lifted: zero.clone(),
            revealed: FxHashMap::default(),
            queue: BinaryHeap::new(),
            counters: Counters::default(),
            rng,
            seq: 0,
            next_generation: 0,
            span_anchor: zero,
            span_max: 0,
            warnings,
        };
        match &params.initial {
            InitialCondition::ExplicitAll { open, .. } => {
                for e in g.edges() {
                    state.pin(e, *open);
                }
            }
            InitialCondition::FinitePattern { pattern, .. } => {
                for (e, &open) in pattern {
                    state.pin(e.clone(), open);
                }
            }
            _ => {}
        }
        let first = exp_variate(&mut state.rng, 1.0);
        state.push(first, EventKind::WalkerAttempt);
        Ok(state)
    }

    fn push(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Event {
            time,
            seq: self.seq,
            kind,
        });
    }

    /// Reveals `e` with a known state and schedules its refresh.
    fn pin(&mut self, e: EdgeId, open: bool) {
        let next_refresh = self.time + exp_variate(&mut self.rng, self.params.mu);
        let generation = self.next_generation;
        self.next_generation += 1;
        self.revealed.insert(
            e.clone(),
            EdgeKnowledge {
                open,
                next_refresh,
                generation,
            },
        );
        self.push(next_refresh, EventKind::EdgeRefresh { edge: e, generation });
    }

    /// State of `e`, drawing it from Bernoulli(p) if unrevealed.
    fn query(&mut self, e: &EdgeId) -> (bool, bool) {
        if let Some(k) = self.revealed.get(e) {
            return (k.open, false);
        }
        let open = uniform(&mut self.rng) < self.params.p;
        self.pin(e.clone(), open);
        (open, true)
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn geometry(&self) -> &Geometry {
        &self.params.geometry
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn revealed_count(&self) -> usize {
        self.revealed.len()
    }

    pub fn knowledge(&self, e: &EdgeId) -> Option<&EdgeKnowledge> {
        self.revealed.get(e)
    }

    /// Revealed edges in canonical order.
    pub fn revealed_edges(&self) -> Vec<(EdgeId, EdgeKnowledge)> {
        let mut out: Vec<_> = self
            .revealed
            .iter()
            .map(|(e, k)| (e.clone(), *k))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    /// Time of the next queued event.
    pub fn next_event_time(&self) -> Option<f64> {
        self.queue.peek().map(|e| e.time)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            time: self.time,
            walker: self.walker.coords().to_vec(),
            revealed: self.revealed.len(),
        }
    }

    /// Restarts the running maximum of displacement from the current position.
    pub fn reset_span(&mut self) {
        self.span_anchor = self.lifted.clone();
        self.span_max = 0;
    }

    /// Largest lifted distance from the anchor set by [`Self::reset_span`].
    pub fn span(&self) -> u64 {
        self.span_max
    }

    pub fn step(&mut self) -> EventOutcome {
        let ev = self.queue.pop().expect("walker attempt is always pending");
        debug_assert!(ev.time >= self.time);
        self.time = ev.time;
        match ev.kind {
            EventKind::WalkerAttempt => {
                let g = self.params.geometry;
                let direction = self.rng.random_range(0..g.degree());
                let edge = g.edge_toward(&self.walker, direction);
                let (open, newly_revealed) = self.query(&edge);
                self.counters.attempts += 1;
                if open {
                    self.walker = g.step(&self.walker, direction);
                    let (axis, sign) = direction_parts(direction);
                    self.lifted[axis] += sign;
                    self.counters.moves += 1;
                    let dist: u64 = self
                        .lifted
                        .iter()
                        .zip(self.span_anchor.iter())
                        .map(|(a, b)| (a - b).unsigned_abs())
                        .sum();
                    self.span_max = self.span_max.max(dist);
                }
                let next = self.time + exp_variate(&mut self.rng, 1.0);
                self.push(next, EventKind::WalkerAttempt);
                EventOutcome::Attempt {
                    time: self.time,
                    direction,
                    edge,
                    newly_revealed,
                    open,
                    moved: open,
                }
            }
            EventKind::EdgeRefresh { edge, generation } => {
                let current = self.revealed.get(&edge).map(|k| k.generation);
                if current == Some(generation) {
                    self.revealed.remove(&edge);
                    self.counters.refreshes += 1;
                    EventOutcome::Refresh {
                        time: self.time,
                        edge,
                    }
                } else {
                    EventOutcome::StaleRefresh { time: self.time }
                }
            }
        }
    }

    /// Reveals every edge adjacent to the walker. Does not change the law.
    pub fn reveal_adjacent(&mut self) {
        let g = self.params.geometry;
        for dir in 0..g.degree() {
            let e = g.edge_toward(&self.walker, dir);
            self.query(&e);
        }
    }

    /// True iff, after revealing the walker's edges, exactly those edges are
    /// revealed and all of them are closed.
    pub fn is_regenerative(&mut self) -> bool {
        self.reveal_adjacent();
        let g = self.params.geometry;
        if self.revealed.len() != g.degree() {
            return false;
        }
        (0..g.degree()).all(|dir| {
            let e = g.edge_toward(&self.walker, dir);
            !self.revealed[&e].open
        })
    }

    /// Runs until the walker stands on `target` or the horizon passes.
    /// Returns the hitting time, if any.
    pub fn run_until_hit(&mut self, target: &Vertex, horizon: f64) -> Result<Option<f64>, SimError> {
        check_horizon(self.time, horizon)?;
        if self.walker == *target {
            return Ok(Some(self.time));
        }
        loop {
            match self.next_event_time() {
                Some(t) if t <= horizon => {
                    if self.step().moved() && self.walker == *target {
                        return Ok(Some(self.time));
                    }
                }
                _ => {
                    self.time = horizon;
                    return Ok(None);
                }
            }
        }
    }

    /// Runs until the walker is back at its current vertex after having
    /// left it, or the horizon passes. Returns the return time, if any.
    pub fn run_until_return(&mut self, horizon: f64) -> Result<Option<f64>, SimError> {
        check_horizon(self.time, horizon)?;
        let home = self.walker.clone();
        let mut departed = false;
        loop {
            match self.next_event_time() {
                Some(t) if t <= horizon => {
                    if self.step().moved() {
                        if self.walker == home {
                            if departed {
                                return Ok(Some(self.time));
                            }
                        } else {
                            departed = true;
                        }
                    }
                }
                _ => {
                    self.time = horizon;
                    return Ok(None);
                }
            }
        }
    }
}

impl Engine for SimState {
    fn time(&self) -> f64 {
        self.time
    }

    fn walker(&self) -> &Vertex {
        &self.walker
    }

    fn lifted(&self) -> &[i64] {
        &self.lifted
    }

    fn counters(&self) -> Counters {
        self.counters
    }

    fn run_until(&mut self, t: f64) -> Result<(), SimError> {
        check_horizon(self.time, t)?;
        while self.next_event_time().is_some_and(|next| next <= t) {
            self.step();
        }
        self.time = t;
        Ok(())
    }
}
