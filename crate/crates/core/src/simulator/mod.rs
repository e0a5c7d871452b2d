//! Exact continuous-time simulation of the walker/environment pair.
//!
//! Two engines share the same parameters and observable law:
//!
//! * [`SimState`], the lazy engine. An edge carries state only while it is
//!   *revealed*, i.e. the walker attempted to cross it and it has not
//!   refreshed since. Every other edge is, conditionally on the observed
//!   history, an independent Bernoulli(p) and is stored as absence.
//! * [`FullEngine`], which materializes every torus edge with its own refresh
//!   clock. It serves as a reference and for probing fixed edges.
//!
//! The walker attempts a step at rate 1 toward a uniformly chosen neighbor
//! and crosses iff the edge is open. Each edge refreshes at rate `mu` to a
//! fresh Bernoulli(p) state.

mod full;
mod lazy;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{EdgeId, Geometry, Vertex};

pub use full::{FullEngine, FULL_ENGINE_EDGE_BUDGET};
pub use lazy::{EdgeKnowledge, EventOutcome, SimState, Snapshot};

/// Largest model time accepted by `run_until`.
pub const MAX_HORIZON: f64 = (1u64 << 40) as f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("requested time {requested} is before the current time {current}")]
    TimeReversal { requested: f64, current: f64 },
    #[error("horizon {0} exceeds the 2^40 cap")]
    HorizonTooLong(f64),
    #[error("full engine needs {edges} edges, budget is {budget}")]
    TooLarge { edges: usize, budget: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialCondition {
    /// Environment from `pi_p`, walker uniform on the torus.
    StationaryUniformWalker,
    /// Environment from `pi_p`, walker at the given vertex.
    StationaryWalkerAt(Vertex),
    /// Every edge in the given state (torus only).
    ExplicitAll { open: bool, walker: Vertex },
    /// Finitely many pinned edges, stationary elsewhere.
    FinitePattern {
        walker: Vertex,
        pattern: BTreeMap<EdgeId, bool>,
    },
}

impl InitialCondition {
    /// Walker at the origin in a stationary environment.
    pub fn origin(geometry: &Geometry) -> Self {
        InitialCondition::StationaryWalkerAt(geometry.origin())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub geometry: Geometry,
    pub p: f64,
    pub mu: f64,
    pub seed: u64,
    pub initial: InitialCondition,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub attempts: u64,
    pub moves: u64,
    pub refreshes: u64,
}

impl SimParams {
    pub fn new(geometry: Geometry, p: f64, mu: f64, seed: u64, initial: InitialCondition) -> Self {
        SimParams {
            geometry,
            p,
            mu,
            seed,
            initial,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SimParams {
            seed,
            ..self.clone()
        }
    }

    pub fn with_initial(&self, initial: InitialCondition) -> Self {
        SimParams {
            initial,
            ..self.clone()
        }
    }

    /// Checks the parameters and returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>, SimError> {
        let mut warnings = Vec::new();
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(SimError::InvalidParams(format!(
                "p must lie strictly between 0 and 1, got {}",
                self.p
            )));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(SimError::InvalidParams(format!(
                "mu must be positive and finite, got {}",
                self.mu
            )));
        }
        if self.mu > 1.0 {
            warnings.push(format!(
                "mu = {} exceeds 1; scaling statements assume mu <= 1",
                self.mu
            ));
        }
        let g = &self.geometry;
        match &self.initial {
            InitialCondition::StationaryUniformWalker => {
                if !g.is_torus() {
                    return Err(SimError::InvalidParams(
                        "a uniform walker needs a torus geometry".into(),
                    ));
                }
            }
            InitialCondition::StationaryWalkerAt(w) => check_vertex(g, w)?,
            InitialCondition::ExplicitAll { walker, .. } => {
                if !g.is_torus() {
                    return Err(SimError::InvalidParams(
                        "ExplicitAll needs a torus geometry".into(),
                    ));
                }
                check_vertex(g, walker)?;
            }
            InitialCondition::FinitePattern { walker, pattern } => {
                check_vertex(g, walker)?;
                for e in pattern.keys() {
                    check_vertex(g, &e.base)?;
                    if e.axis >= g.dim() {
                        return Err(SimError::InvalidParams(format!(
                            "edge {e} has axis outside the dimension"
                        )));
                    }
                }
            }
        }
        Ok(warnings)
    }
}

fn check_vertex(g: &Geometry, v: &Vertex) -> Result<(), SimError> {
    let canonical = g
        .vertex(v.coords())
        .map_err(|e| SimError::InvalidParams(e.to_string()))?;
    if canonical != *v {
        return Err(SimError::InvalidParams(format!(
            "vertex {v} is not in canonical form"
        )));
    }
    Ok(())
}

/// Common observation surface of both engines.
pub trait Engine {
    fn time(&self) -> f64;
    fn walker(&self) -> &Vertex;
    /// Cumulative signed displacement, not reduced mod `n`.
    fn lifted(&self) -> &[i64];
    fn counters(&self) -> Counters;
    fn run_until(&mut self, t: f64) -> Result<(), SimError>;
}

pub(crate) fn check_horizon(current: f64, t: f64) -> Result<(), SimError> {
    if t > MAX_HORIZON || t.is_nan() {
        return Err(SimError::HorizonTooLong(t));
    }
    if t < current {
        return Err(SimError::TimeReversal {
            requested: t,
            current,
        });
    }
    Ok(())
}
