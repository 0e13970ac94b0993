//! Deterministic, state-verifiable evaluation harness for game-playing
//! agents.

pub mod agent;
pub mod canonical;
pub mod control;
pub mod eval;
pub mod kernel;
pub mod parse;
pub mod pipeline;
pub mod registry;
pub mod rng;
pub mod report;
pub mod runtime;
pub mod semantic;
pub mod snapshot;
pub mod suite;
