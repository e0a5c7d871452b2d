//! Random walk on dynamical percolation: exact event-driven simulation,
//! Monte Carlo estimators, and an exact finite-state oracle for tiny tori.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod coupling;
pub mod estimators;
pub mod lattice;
pub mod oracle;
pub mod percolation;
pub mod runner;
pub mod rng;
pub mod simulator;
