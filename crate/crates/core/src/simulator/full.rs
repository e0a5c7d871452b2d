use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;

use super::{check_horizon, Counters, Engine, InitialCondition, SimError, SimParams};
use crate::lattice::{direction_parts, Coords, EdgeId, Geometry, Vertex};
use crate::rng::{exp_variate, stream, uniform, SimRng};

pub const FULL_ENGINE_EDGE_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Attempt,
    Refresh(usize),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: Kind,
}

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

/// Reference engine holding every torus edge, each with its own refresh clock.
///
/// Draw order at init: walker position (uniform start only), edge states in
/// edge-index order, edge refresh clocks in edge-index order, first attempt
/// clock. A refresh draws the new state then the next clock.
#[derive(Debug, Clone)]
pub struct FullEngine {
    geometry: Geometry,
    p: f64,
    mu: f64,
    time: f64,
    walker: Vertex,
    lifted: Coords,
    open: Vec<bool>,
    queue: BinaryHeap<Event>,
    counters: Counters,
    rng: SimRng,
    seq: u64,
}

impl FullEngine {
    pub fn init(params: &SimParams) -> Result<Self, SimError> {
        params.validate()?;
        let g = params.geometry;
        let edges = g.edge_count().ok_or_else(|| {
            SimError::InvalidParams("the full engine needs a torus geometry".into())
        })?;
        if edges > FULL_ENGINE_EDGE_BUDGET {
            return Err(SimError::TooLarge {
                edges,
                budget: FULL_ENGINE_EDGE_BUDGET,
            });
        }
        let mut rng = stream(params.seed);
        let walker = match &params.initial {
            InitialCondition::StationaryUniformWalker => {
                g.vertex_from_index(rng.random_range(0..g.vertex_count().unwrap()))
            }
            InitialCondition::StationaryWalkerAt(w)
            | InitialCondition::ExplicitAll { walker: w, .. }
            | InitialCondition::FinitePattern { walker: w, .. } => w.clone(),
        };
        let open: Vec<bool> = match &params.initial {
            InitialCondition::ExplicitAll { open, .. } => vec![*open; edges],
            _ => (0..edges).map(|_| uniform(&mut rng) < params.p).collect(),
        };
        let mut engine = FullEngine {
            geometry: g,
            p: params.p,
            mu: params.mu,
            time: 0.0,
            walker,
            lifted: smallvec::smallvec![0; g.dim()],
            open,
            queue: BinaryHeap::with_capacity(edges + 1),
            counters: Counters::default(),
            rng,
            seq: 0,
        };
        if let InitialCondition::FinitePattern { pattern, .. } = &params.initial {
            for (e, &state) in pattern {
                let idx = g.edge_index(e);
                engine.open[idx] = state;
            }
        }
        for idx in 0..edges {
            let t = exp_variate(&mut engine.rng, engine.mu);
            engine.push(t, Kind::Refresh(idx));
        }
        let t = exp_variate(&mut engine.rng, 1.0);
        engine.push(t, Kind::Attempt);
        Ok(engine)
    }

    fn push(&mut self, time: f64, kind: Kind) {
        self.seq += 1;
        self.queue.push(Event {
            time,
            seq: self.seq,
            kind,
        });
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn edge_open(&self, e: &EdgeId) -> bool {
        self.open[self.geometry.edge_index(e)]
    }

    pub fn open_fraction(&self) -> f64 {
        self.open.iter().filter(|&&o| o).count() as f64 / self.open.len() as f64
    }

    /// Processes one event; returns whether the walker moved.
    pub fn step(&mut self) -> bool {
        let ev = self.queue.pop().expect("events always pending");
        self.time = ev.time;
        match ev.kind {
            Kind::Attempt => {
                let g = self.geometry;
                let dir = self.rng.random_range(0..g.degree());
                let idx = g.edge_index(&g.edge_toward(&self.walker, dir));
                let moved = self.open[idx];
                self.counters.attempts += 1;
                if moved {
                    self.walker = g.step(&self.walker, dir);
                    let (axis, sign) = direction_parts(dir);
                    self.lifted[axis] += sign;
                    self.counters.moves += 1;
                }
                let next = self.time + exp_variate(&mut self.rng, 1.0);
                self.push(next, Kind::Attempt);
                moved
            }
            Kind::Refresh(idx) => {
                self.open[idx] = uniform(&mut self.rng) < self.p;
                self.counters.refreshes += 1;
                let next = self.time + exp_variate(&mut self.rng, self.mu);
                self.push(next, Kind::Refresh(idx));
                false
            }
        }
    }
}

impl Engine for FullEngine {
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
        while self.queue.peek().is_some_and(|e| e.time <= t) {
            self.step();
        }
        self.time = t;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_infinite_and_oversized() {
        let z = Geometry::infinite(1).unwrap();
        let p = SimParams::new(z, 0.5, 0.5, 1, InitialCondition::origin(&z));
        assert!(matches!(FullEngine::init(&p), Err(SimError::InvalidParams(_))));
        let big = Geometry::torus(2, 1000).unwrap();
        let p = SimParams::new(big, 0.5, 0.5, 1, InitialCondition::origin(&big));
        assert!(matches!(FullEngine::init(&p), Err(SimError::TooLarge { .. })));
    }

    #[test]
    fn all_open_start_is_simple_random_walk_until_first_refresh() {
        let g = Geometry::torus(1, 8).unwrap();
        let p = SimParams::new(
            g,
            0.5,
            1e-6,
            4,
            InitialCondition::ExplicitAll {
                open: true,
                walker: g.origin(),
            },
        );
        let mut e = FullEngine::init(&p).unwrap();
        for _ in 0..200 {
            e.step();
            if e.counters().refreshes > 0 {
                break;
            }
        }
        let c = e.counters();
        assert_eq!(c.attempts, c.moves);
    }

    #[test]
    fn stationary_fixed_edge_open_frequency() {
        let g = Geometry::torus(1, 8).unwrap();
        let mu = 0.5;
        let e0 = EdgeId {
            base: g.origin(),
            axis: 0,
        };
        let reps = 10_000;
        let mut open = 0;
        for seed in 0..reps {
            let p = SimParams::new(g, 0.3, mu, seed, InitialCondition::StationaryUniformWalker);
            let mut e = FullEngine::init(&p).unwrap();
            e.run_until(10.0 / mu).unwrap();
            if e.edge_open(&e0) {
                open += 1;
            }
        }
        let f = open as f64 / reps as f64;
        assert!((f - 0.3).abs() <= 0.01, "frequency {f}");
    }
}
