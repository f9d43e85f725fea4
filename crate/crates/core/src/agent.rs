//! The online decision loop.
//!
//! Every decision interval the agent turns the latest trace window into a
//! feature vector, classifies it, votes over recent class distributions and
//! looks the winning class up in the machine's mapping table. A policy
//! change is issued only when the table names a different policy and the
//! cooldown since the agent's last switch has elapsed.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::classify::{predict_proba, ForestModel};
use crate::error::{Error, Result};
use crate::metrics::{extract_features, FeatureVector, TraceWindow};
use crate::policies::{PolicyId, Portfolio};
use crate::sim::{
    run_with_portfolio, DecisionContext, PolicyController, SimConfig, SimRun, SwitchRequest,
};
use crate::voting::{push_and_vote, VotingParams, VotingState};
use crate::workloads::Scenario;

/// Monotonic time source for latency measurement, in nanoseconds.
pub trait Clock {
    fn now_ns(&self) -> u64;
}

/// Always reads zero, for deterministic runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroClock;

impl Clock for ZeroClock {
    fn now_ns(&self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: String,
    pub profile_id: String,
    pub dataset_checksum: String,
    pub score_table_checksum: String,
}

/// Best policy per workload class on one machine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingTable {
    pub version: u32,
    pub entries: BTreeMap<String, PolicyId>,
    pub provenance: Provenance,
}

pub const MAPPING_VERSION: u32 = 1;

impl MappingTable {
    pub fn get(&self, class: &str) -> Result<PolicyId> {
        self.entries
            .get(class)
            .copied()
            .ok_or_else(|| Error::UnmappedClass(class.into()))
    }

    /// Every label has an entry and every entry names a registered policy.
    pub fn validate(&self, labels: &[String], portfolio: &Portfolio) -> Result<()> {
        for l in labels {
            self.get(l)?;
        }
        for p in self.entries.values() {
            if !portfolio.contains(*p) {
                return Err(Error::PolicyNotInPortfolio(*p));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentMode {
    #[default]
    Real,
    Shadow,
    ObserveOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub decision_interval_ticks: u64,
    pub cooldown_ticks: u64,
    pub mode: AgentMode,
    pub voting: VotingParams,
    pub initial_policy: PolicyId,
    pub model_ref: String,
    pub mapping_ref: String,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            decision_interval_ticks: 10_000,
            cooldown_ticks: 100_000,
            mode: AgentMode::Real,
            voting: VotingParams::default(),
            initial_policy: PolicyId::BASELINE,
            model_ref: String::new(),
            mapping_ref: String::new(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self, sim: &SimConfig) -> Result<()> {
        if self.decision_interval_ticks < sim.sample_interval_ticks || self.decision_interval_ticks == 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "decision interval {} is shorter than the sample interval {}",
                self.decision_interval_ticks,
                sim.sample_interval_ticks
            )));
        }
        self.voting.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub tick: u64,
    pub window_start_tick: u64,
    pub features: Vec<f64>,
    pub prob_dist: Vec<f64>,
    pub voted_class: String,
    pub active_policy: PolicyId,
    pub chosen_policy: PolicyId,
    pub switched: bool,
    pub shadow: bool,
    pub inference_latency_ms: f64,
    pub decision_latency_ms: f64,
}

/// What the agent wants done after a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    None,
    Switch(SwitchRequest),
}

pub struct Agent<'m, C: Clock> {
    pub config: AgentConfig,
    model: &'m ForestModel,
    mapping: &'m MappingTable,
    clock: C,
    pub voting: VotingState,
    pub last_switch_tick: Option<u64>,
    pub records: Vec<DecisionRecord>,
}

fn ns_to_ms(ns: u64) -> f64 {
    ns as f64 / 1e6
}

impl<'m, C: Clock> Agent<'m, C> {
    pub fn new(
        config: AgentConfig,
        model: &'m ForestModel,
        mapping: &'m MappingTable,
        portfolio: &Portfolio,
        clock: C,
    ) -> Result<Self> {
        config.voting.validate()?;
        mapping.validate(&model.label_set, portfolio)?;
        if !portfolio.contains(config.initial_policy) {
            return Err(Error::PolicyNotInPortfolio(config.initial_policy));
        }
        Ok(Self {
            config,
            model,
            mapping,
            clock,
            voting: VotingState::new(),
            last_switch_tick: None,
            records: Vec::new(),
        })
    }

    fn cooled_down(&self, tick: u64) -> bool {
        self.last_switch_tick
            .is_none_or(|t| tick.saturating_sub(t) >= self.config.cooldown_ticks)
    }

    /// Perceive, vote, and decide for one interval. Records exactly one
    /// decision; the returned action is for the caller to carry out.
    pub fn step(&mut self, tick: u64, features: &FeatureVector, active: PolicyId) -> Result<Action> {
        let t0 = self.clock.now_ns();
        let dist = predict_proba(self.model, features)?;
        let t1 = self.clock.now_ns();
        let class = push_and_vote(&mut self.voting, dist.clone(), &self.config.voting)?;
        let label = &self.model.label_set[class];
        let wanted = self.mapping.get(label)?;
        let eligible = wanted != active && self.cooled_down(tick);
        let action = match self.config.mode {
            AgentMode::ObserveOnly => Action::None,
            AgentMode::Real if eligible => Action::Switch(SwitchRequest {
                policy: wanted,
                shadow: false,
            }),
            AgentMode::Shadow if eligible => Action::Switch(SwitchRequest {
                policy: wanted,
                shadow: true,
            }),
            _ => Action::None,
        };
        if let Action::Switch(_) = action {
            self.last_switch_tick = Some(tick);
        }
        let t2 = self.clock.now_ns();
        let switched = matches!(action, Action::Switch(r) if !r.shadow);
        self.records.push(DecisionRecord {
            tick,
            window_start_tick: features.start_tick,
            features: features.values.to_vec(),
            prob_dist: dist.probs,
            voted_class: label.clone(),
            active_policy: active,
            chosen_policy: wanted,
            switched,
            shadow: matches!(action, Action::Switch(r) if r.shadow),
            inference_latency_ms: ns_to_ms(t1.saturating_sub(t0)),
            decision_latency_ms: ns_to_ms(t2.saturating_sub(t1)),
        });
        Ok(action)
    }
}

/// Features of the last sampling window that ends at `ctx.tick`.
pub fn window_features(ctx: &DecisionContext<'_>) -> Result<FeatureVector> {
    let len = ctx.config.sample_interval_ticks;
    let start = ctx.tick.saturating_sub(len);
    let lo = ctx.window.partition_point(|e| e.tick < start);
    let w = TraceWindow {
        start_tick: start,
        end_tick: ctx.tick,
        events: &ctx.window[lo..],
    };
    extract_features(&w, ctx.config)
}

impl<C: Clock> PolicyController for Agent<'_, C> {
    fn initial_policy(&self) -> PolicyId {
        self.config.initial_policy
    }

    fn interval(&self) -> Option<u64> {
        Some(self.config.decision_interval_ticks)
    }

    fn on_interval(&mut self, ctx: &DecisionContext<'_>) -> Result<Option<SwitchRequest>> {
        let fv = window_features(ctx)?;
        Ok(match self.step(ctx.tick, &fv, ctx.active)? {
            Action::None => None,
            Action::Switch(r) => Some(r),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRun {
    pub run: SimRun,
    pub decisions: Vec<DecisionRecord>,
}

#[allow(clippy::too_many_arguments)]
pub fn run_agent<C: Clock>(
    config: &AgentConfig,
    sim: &SimConfig,
    scenario: &Scenario,
    model: &ForestModel,
    mapping: &MappingTable,
    portfolio: &Portfolio,
    clock: C,
) -> Result<AgentRun> {
    config.validate(sim)?;
    let mut agent = Agent::new(config.clone(), model, mapping, portfolio, clock)?;
    let run = run_with_portfolio(sim, scenario, &mut agent, portfolio)?;
    Ok(AgentRun {
        run,
        decisions: agent.records,
    })
}
