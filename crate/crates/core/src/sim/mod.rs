//! Deterministic fixed-tick scheduling simulator.
//!
//! Time advances in whole ticks. Within a tick every core either runs one
//! task, idles, or stalls (during a policy switch). Everything that happens
//! as a consequence of executing tick `t - 1` (bursts finishing, tasks
//! blocking) is stamped `t`, the boundary at which the engine reacts. The
//! processing order at a boundary `t` is:
//!
//! 1. close the sampling window `[t - interval, t)` with a `metric_sample`
//!    event stamped `t - 1`;
//! 2. finish bursts that ran out during tick `t - 1`;
//! 3. fire timers due at `t` (arrivals, wakes, frame releases, departures);
//! 4. ask the controller for a decision if `t` is a decision boundary;
//! 5. check running tasks for preemption, then fill idle cores in ascending
//!    core order.
//!
//! Step 5 is skipped while a switch stall is in progress.
//!
//! The engine fast-forwards across ticks where nothing can change, so
//! [`Engine::advance`] and repeated [`Engine::step_tick`] produce identical
//! traces.

mod config;
mod controller;
mod engine;
mod task;
mod trace;

pub use config::SimConfig;
pub use controller::{
    DecisionContext, PolicyController, ScriptedController, StaticController, SwitchRequest,
};
pub use engine::{
    run_simulation, run_with_portfolio, validate_scenario, CoreTotals, Engine, SimRun,
    TaskAccount,
};
pub use task::{Behavior, SimTask, TaskClass};
pub use trace::{BlockReason, EnqueueReason, Event, MetricSample, TraceEvent};
