//! Simulation testbed for detecting misconfigured voltage-dependent control
//! curves of devices in radial low-voltage distribution grids.
//!
//! The crate covers the full loop: grid modelling ([`grid`]), synthetic load
//! and generation profiles ([`profiles`]), P(U) control laws and their
//! malfunction variants ([`curves`]), a backward-forward-sweep load-flow
//! engine with droop resolution ([`powerflow`]), labelled dataset extraction
//! and persistence ([`datagen`]), from-scratch supervised models
//! ([`learners`]), unsupervised analysis tools ([`analysis`]) and scoring
//! utilities ([`evaluation`]).

pub mod analysis;
pub mod container;
pub mod curves;
pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod grid;
pub mod learners;
pub mod powerflow;
pub mod profiles;
pub mod rng;

pub use error::{Error, Result};
