//! File formats, configuration, parallel execution and wall-clock timing
//! for the adaptive scheduling agent. The `asa` binary is a thin command
//! line over this library.

pub mod artifacts;
pub mod catalog;
pub mod config;
pub mod error;
pub mod files;
pub mod report;
pub mod runtime;

pub use error::{Error, Result};
