//! Adaptive scheduling agent core.
//!
//! A deterministic tick-driven scheduling simulator, a portfolio of expert
//! scheduling policies, and the agent that routes between them: it turns
//! trace windows into feature vectors, classifies the workload with a tree
//! ensemble, smooths the class stream with time-weighted probability voting,
//! and switches to the policy a mapping table names for that class.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line and parallel execution live in the `asa` companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod agent;
pub mod classify;
pub mod digest;
pub mod error;
pub mod eval;
pub mod exec;
pub mod math;
pub mod metrics;
pub mod pipeline;
pub mod policies;
pub mod rng;
pub mod sim;
pub mod uxscore;
pub mod voting;
pub mod workloads;

pub use error::{Error, Result};
