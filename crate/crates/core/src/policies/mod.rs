//! Expert scheduling policies.
//!
//! Every policy implements [`Policy`], a small callback surface modeled on a
//! pluggable-scheduler interface: the engine tells the policy when tasks
//! become runnable and how long they ran, and asks it which task a free core
//! should run next and whether a running task should give up its core.
//!
//! Policies work on dense task indices ([`TaskIdx`]). The engine assigns
//! indices in ascending `task_id` order, so ordering by index is ordering by
//! task id.

mod boost;
mod edf;
mod eevdf;
mod fair;
mod fifo;
mod lottery;
mod pack;
mod rr;
mod vclock;

use alloc::boxed::Box;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use boost::LatencyBoost;
pub use edf::DeadlineEdf;
pub use eevdf::EevdfLike;
pub use fair::FairVruntime;
pub use fifo::Fifo;
pub use lottery::Lottery;
pub use pack::CorePack;
pub use rr::RoundRobin;

pub type TaskIdx = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyId {
    EevdfLike,
    FairVruntime,
    Fifo,
    Rr,
    LatencyBoost,
    CorePack,
    DeadlineEdf,
    Lottery,
}

impl PolicyId {
    /// The default portfolio, baseline first.
    pub const ALL: [PolicyId; 8] = [
        PolicyId::EevdfLike,
        PolicyId::FairVruntime,
        PolicyId::Fifo,
        PolicyId::Rr,
        PolicyId::LatencyBoost,
        PolicyId::CorePack,
        PolicyId::DeadlineEdf,
        PolicyId::Lottery,
    ];

    pub const BASELINE: PolicyId = PolicyId::EevdfLike;

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyId::EevdfLike => "eevdf_like",
            PolicyId::FairVruntime => "fair_vruntime",
            PolicyId::Fifo => "fifo",
            PolicyId::Rr => "rr",
            PolicyId::LatencyBoost => "latency_boost",
            PolicyId::CorePack => "core_pack",
            PolicyId::DeadlineEdf => "deadline_edf",
            PolicyId::Lottery => "lottery",
        }
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyId::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::UnknownPolicy(s.to_string()))
    }
}

/// What a policy sees of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskView {
    pub idx: TaskIdx,
    pub weight: u32,
    pub last_core: Option<u32>,
    /// Became runnable by waking from a block and has not yet used up a
    /// slice since.
    pub woke: bool,
    /// Absolute tick by which the task's pending work is due, if any.
    pub deadline: Option<u64>,
}

pub trait Policy: Send {
    fn id(&self) -> PolicyId;

    /// A task entered the runnable set.
    fn on_enqueue(&mut self, task: &TaskView, now: u64);

    /// Remove and return the task `core` should run next.
    fn pick_next(&mut self, core: u32, now: u64) -> Option<TaskIdx>;

    /// `running` executed for `ticks` ticks on `core`.
    fn on_tick(&mut self, core: u32, running: &TaskView, ticks: u64);

    fn on_wake(&mut self, _task: &TaskView, _now: u64) {}

    fn on_block(&mut self, _task: &TaskView, _now: u64) {}

    /// Slice length for `task`; `None` means it keeps the core until it
    /// blocks or finishes.
    fn quantum_for(&self, task: &TaskView) -> Option<u64>;

    /// Number of queued (runnable, not running) tasks.
    fn queued(&self) -> usize;

    /// Whether `running`, having run `ran` ticks since dispatch, should be
    /// preempted now.
    fn should_preempt(&self, _core: u32, running: &TaskView, ran: u64) -> bool {
        match self.quantum_for(running) {
            Some(q) => ran >= q && self.queued() > 0,
            None => false,
        }
    }

    /// Ticks until `should_preempt` may change its answer without any new
    /// enqueue. The engine never runs past this point without asking again.
    fn next_check_in(&self, running: &TaskView, ran: u64) -> Option<u64> {
        self.quantum_for(running)
            .and_then(|q| q.checked_sub(ran))
            .filter(|&d| d > 0)
    }
}

/// Per-policy tunables. Slices and quanta are in ticks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyParams {
    pub eevdf_like: SliceParams,
    pub fair_vruntime: SliceParams,
    pub rr: SliceParams,
    pub latency_boost: SliceParams,
    pub core_pack: PackParams,
    pub deadline_edf: SliceParams,
    pub lottery: SliceParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceParams {
    pub slice: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PackParams {
    pub slice: u64,
    /// How far down the queue to look for a cache-warm task.
    pub affinity_scan: usize,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            eevdf_like: SliceParams { slice: 30 },
            fair_vruntime: SliceParams { slice: 30 },
            rr: SliceParams { slice: 40 },
            latency_boost: SliceParams { slice: 30 },
            core_pack: PackParams {
                slice: 60,
                affinity_scan: 4,
            },
            deadline_edf: SliceParams { slice: 30 },
            lottery: SliceParams { slice: 40 },
        }
    }
}

impl PolicyParams {
    /// Largest slice any time-sliced policy uses.
    pub fn max_quantum(&self) -> u64 {
        [
            self.eevdf_like.slice,
            self.fair_vruntime.slice,
            self.rr.slice,
            self.latency_boost.slice,
            self.core_pack.slice,
            self.deadline_edf.slice,
            self.lottery.slice,
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let slices = [
            self.eevdf_like.slice,
            self.fair_vruntime.slice,
            self.rr.slice,
            self.latency_boost.slice,
            self.core_pack.slice,
            self.deadline_edf.slice,
            self.lottery.slice,
        ];
        if slices.contains(&0) {
            return Err(Error::InvalidConfig("policy slices must be positive".into()));
        }
        Ok(())
    }
}

/// Instantiate a fresh policy. `seed` only matters for randomized policies.
pub fn build(id: PolicyId, params: &PolicyParams, seed: u64) -> Box<dyn Policy> {
    match id {
        PolicyId::EevdfLike => Box::new(EevdfLike::new(params.eevdf_like.slice)),
        PolicyId::FairVruntime => Box::new(FairVruntime::new(params.fair_vruntime.slice)),
        PolicyId::Fifo => Box::new(Fifo::new()),
        PolicyId::Rr => Box::new(RoundRobin::new(params.rr.slice)),
        PolicyId::LatencyBoost => Box::new(LatencyBoost::new(params.latency_boost.slice)),
        PolicyId::CorePack => Box::new(CorePack::new(
            params.core_pack.slice,
            params.core_pack.affinity_scan,
        )),
        PolicyId::DeadlineEdf => Box::new(DeadlineEdf::new(params.deadline_edf.slice)),
        PolicyId::Lottery => Box::new(Lottery::new(params.lottery.slice, seed)),
    }
}

/// Ordered, duplicate-free set of policies the agent may route to. The
/// order is the tie-breaking order everywhere in the crate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PolicyId>", into = "Vec<PolicyId>")]
pub struct Portfolio {
    ids: Vec<PolicyId>,
}

impl Portfolio {
    pub fn ids(&self) -> &[PolicyId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: PolicyId) -> bool {
        self.ids.contains(&id)
    }

    pub fn position(&self, id: PolicyId) -> Option<usize> {
        self.ids.iter().position(|&p| p == id)
    }
}

impl Default for Portfolio {
    fn default() -> Self {
        Self {
            ids: PolicyId::ALL.to_vec(),
        }
    }
}

impl TryFrom<Vec<PolicyId>> for Portfolio {
    type Error = Error;

    fn try_from(ids: Vec<PolicyId>) -> Result<Self> {
        register_portfolio(&ids)
    }
}

impl From<Portfolio> for Vec<PolicyId> {
    fn from(p: Portfolio) -> Self {
        p.ids
    }
}

pub fn register_portfolio(ids: &[PolicyId]) -> Result<Portfolio> {
    if ids.is_empty() {
        return Err(Error::InvalidConfig("portfolio is empty".into()));
    }
    let mut out: Vec<PolicyId> = Vec::with_capacity(ids.len());
    for &id in ids {
        if out.contains(&id) {
            return Err(Error::DuplicatePolicy(id));
        }
        out.push(id);
    }
    Ok(Portfolio { ids: out })
}

/// Nice value to load weight, the familiar 1.25x-per-step table.
pub fn nice_to_weight(nice: i8) -> u32 {
    const WEIGHTS: [u32; 40] = [
        88761, 71755, 56483, 46273, 36291, 29154, 23254, 18705, 14949, 11916, 9548, 7620, 6100,
        4904, 3906, 3121, 2501, 1991, 1586, 1277, 1024, 820, 655, 526, 423, 335, 272, 215, 172,
        137, 110, 87, 70, 56, 45, 36, 29, 23, 18, 15,
    ];
    let i = (i32::from(nice).clamp(-20, 19) + 20) as usize;
    WEIGHTS[i]
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn view(idx: TaskIdx) -> TaskView {
        TaskView {
            idx,
            weight: 1024,
            last_core: None,
            woke: false,
            deadline: None,
        }
    }

    #[test]
    fn default_portfolio_has_baseline_first() {
        let p = Portfolio::default();
        assert_eq!(p.len(), 8);
        assert_eq!(p.ids()[0], PolicyId::EevdfLike);
    }

    #[test]
    fn duplicate_registration_fails() {
        let err = register_portfolio(&[PolicyId::Rr, PolicyId::Fifo, PolicyId::Rr]).unwrap_err();
        assert_eq!(err, Error::DuplicatePolicy(PolicyId::Rr));
    }

    #[test]
    fn custom_subset_keeps_order() {
        let p = register_portfolio(&[PolicyId::Fifo, PolicyId::Rr]).unwrap();
        assert_eq!(p.ids(), &[PolicyId::Fifo, PolicyId::Rr]);
    }

    #[test]
    fn ids_round_trip_through_strings() {
        for id in PolicyId::ALL {
            assert_eq!(id.as_str().parse::<PolicyId>().unwrap(), id);
        }
        assert!("scx_magic".parse::<PolicyId>().is_err());
    }

    #[test]
    fn nice_weights() {
        assert_eq!(nice_to_weight(0), 1024);
        assert_eq!(nice_to_weight(-20), 88761);
        assert_eq!(nice_to_weight(19), 15);
    }

    /// Every policy hands out each queued task exactly once and never
    /// returns `None` while tasks are queued.
    #[test]
    fn all_policies_are_work_conserving() {
        let params = PolicyParams::default();
        for id in PolicyId::ALL {
            let mut p = build(id, &params, 7);
            for i in 0..6 {
                p.on_enqueue(&view(i), 0);
            }
            let mut seen = vec![];
            for core in 0..6 {
                let t = p.pick_next(core % 2, 0).expect("work conserving");
                assert!(!seen.contains(&t), "{id} returned {t} twice");
                seen.push(t);
            }
            assert_eq!(p.queued(), 0);
            assert!(p.pick_next(0, 0).is_none());
        }
    }

    /// Picks depend only on the runnable-set history.
    #[test]
    fn picks_are_deterministic() {
        let params = PolicyParams::default();
        for id in PolicyId::ALL {
            let run = || {
                let mut p = build(id, &params, 99);
                let mut out = vec![];
                for round in 0..20u64 {
                    p.on_enqueue(&view((round % 5) as usize), round);
                    if round % 2 == 1 {
                        let t = p.pick_next(0, round).unwrap();
                        p.on_tick(0, &view(t), 3);
                        out.push(t);
                    }
                }
                out
            };
            assert_eq!(run(), run(), "{id}");
        }
    }
}
