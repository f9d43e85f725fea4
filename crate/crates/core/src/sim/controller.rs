//! Who decides the active policy during a run.

use alloc::vec::Vec;

use crate::error::Result;
use crate::policies::PolicyId;

use super::config::SimConfig;
use super::trace::TraceEvent;

/// What a controller sees at a decision boundary.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    /// The boundary tick. The decision takes effect from this tick on.
    pub tick: u64,
    /// Events with `tick - interval <= event.tick < tick`.
    pub window: &'a [TraceEvent],
    pub interval: u64,
    pub active: PolicyId,
    pub last_switch_tick: Option<u64>,
    pub config: &'a SimConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwitchRequest {
    pub policy: PolicyId,
    pub shadow: bool,
}

pub trait PolicyController {
    fn initial_policy(&self) -> PolicyId;

    /// Decision cadence in ticks; `None` means the controller never acts.
    fn interval(&self) -> Option<u64>;

    fn on_interval(&mut self, ctx: &DecisionContext<'_>) -> Result<Option<SwitchRequest>>;
}

/// Runs one policy for the whole horizon.
#[derive(Debug, Clone, Copy)]
pub struct StaticController(pub PolicyId);

impl PolicyController for StaticController {
    fn initial_policy(&self) -> PolicyId {
        self.0
    }

    fn interval(&self) -> Option<u64> {
        None
    }

    fn on_interval(&mut self, _ctx: &DecisionContext<'_>) -> Result<Option<SwitchRequest>> {
        Ok(None)
    }
}

/// Issues pre-planned switch requests at given boundary ticks.
#[derive(Debug, Clone)]
pub struct ScriptedController {
    pub initial: PolicyId,
    pub interval: u64,
    pub script: Vec<(u64, SwitchRequest)>,
}

impl PolicyController for ScriptedController {
    fn initial_policy(&self) -> PolicyId {
        self.initial
    }

    fn interval(&self) -> Option<u64> {
        Some(self.interval)
    }

    fn on_interval(&mut self, ctx: &DecisionContext<'_>) -> Result<Option<SwitchRequest>> {
        Ok(self
            .script
            .iter()
            .find(|(t, _)| *t == ctx.tick)
            .map(|&(_, r)| r))
    }
}
