//! Trace events recorded by the engine.

use serde::{Deserialize, Serialize};

use crate::policies::PolicyId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub tick: u64,
    #[serde(flatten)]
    pub event: Event,
    pub task_id: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnqueueReason {
    Arrival,
    Wake,
    Preempt,
    Switch,
}

/// Why a task left the CPU voluntarily. Also used as the wake reason.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockReason {
    Io,
    Sleep,
    Net,
    Input,
    Frame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Event {
    Enqueue {
        reason: EnqueueReason,
    },
    Dispatch {
        core: u32,
        policy: PolicyId,
        migrated: bool,
    },
    Preempt {
        core: u32,
        ran_ticks: u64,
    },
    Block {
        core: u32,
        reason: BlockReason,
        wait_ticks: u64,
    },
    Wake {
        reason: BlockReason,
        blocked_ticks: u64,
    },
    /// The task finished its work or left the system. `core` is set when it
    /// was running at the time.
    Complete {
        core: Option<u32>,
    },
    PolicySwitch {
        from: PolicyId,
        to: PolicyId,
        shadow: bool,
        stall_ticks: u64,
    },
    InputEvent {
        seq: u32,
    },
    InputResponse {
        seq: u32,
        latency_ticks: u64,
        missed: bool,
    },
    FrameEmit {
        seq: u32,
        latency_ticks: u64,
        missed: bool,
    },
    MetricSample(MetricSample),
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Enqueue { .. } => "enqueue",
            Event::Dispatch { .. } => "dispatch",
            Event::Preempt { .. } => "preempt",
            Event::Block { .. } => "block",
            Event::Wake { .. } => "wake",
            Event::Complete { .. } => "complete",
            Event::PolicySwitch { .. } => "policy_switch",
            Event::InputEvent { .. } => "input_event",
            Event::InputResponse { .. } => "input_response",
            Event::FrameEmit { .. } => "frame_emit",
            Event::MetricSample(_) => "metric_sample",
        }
    }
}

/// Engine-side counters over one sampling window, stamped on the window's
/// last tick. Sums are over ticks in the window.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSample {
    pub window_ticks: u64,
    pub busy_core_ticks: u64,
    pub idle_core_ticks: u64,
    /// Idle core-ticks during which at least one task waited on IO; a
    /// subset of `idle_core_ticks`.
    pub iowait_core_ticks: u64,
    pub stall_core_ticks: u64,
    pub runqueue_sum: u64,
    pub runqueue_max: u64,
    /// Cores busy for at least 90% of the window.
    pub hot_cores: u32,
    pub io_queue_sum: u64,
    pub live_task_ticks: u64,
    /// Work delivered to foreground and background tasks, in work ticks.
    pub fg_work: u64,
    pub bg_work: u64,
}

impl MetricSample {
    pub fn merge(&mut self, other: &MetricSample) {
        self.window_ticks += other.window_ticks;
        self.busy_core_ticks += other.busy_core_ticks;
        self.idle_core_ticks += other.idle_core_ticks;
        self.iowait_core_ticks += other.iowait_core_ticks;
        self.stall_core_ticks += other.stall_core_ticks;
        self.runqueue_sum += other.runqueue_sum;
        self.runqueue_max = self.runqueue_max.max(other.runqueue_max);
        self.hot_cores = self.hot_cores.max(other.hot_cores);
        self.io_queue_sum += other.io_queue_sum;
        self.live_task_ticks += other.live_task_ticks;
        self.fg_work += other.fg_work;
        self.bg_work += other.bg_work;
    }
}
