use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    /// Runs `burst_ticks`, sleeps `wait_ticks` (if non-zero), repeats.
    CpuBurst,
    /// Runs `burst_ticks`, waits on IO for `wait_ticks`, repeats.
    IoCycle,
    /// Thinks for `wait_ticks`, receives an input event, needs `burst_ticks`
    /// of CPU to respond, repeats.
    Interactive,
    /// Frames are released every `burst_ticks + wait_ticks`; each needs
    /// `burst_ticks` of CPU.
    FrameLoop,
    /// Runs `burst_ticks`, waits on the network for `wait_ticks`, repeats.
    NetworkLike,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskClass {
    Foreground,
    #[default]
    Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTask {
    pub task_id: u32,
    pub behavior: Behavior,
    pub burst_ticks: u64,
    pub wait_ticks: u64,
    #[serde(default)]
    pub deadline_ticks: Option<u64>,
    #[serde(default)]
    pub nice: i8,
    #[serde(default)]
    pub arrival_tick: u64,
    #[serde(default)]
    pub total_work_ticks: Option<u64>,
    /// Tick at which the task leaves the system regardless of progress.
    #[serde(default)]
    pub departure_tick: Option<u64>,
    /// Uniform relative jitter applied to every burst and wait, in
    /// thousandths.
    #[serde(default)]
    pub jitter_permille: u32,
    #[serde(default)]
    pub class: TaskClass,
}

impl SimTask {
    pub fn new(task_id: u32, behavior: Behavior, burst_ticks: u64, wait_ticks: u64) -> Self {
        Self {
            task_id,
            behavior,
            burst_ticks,
            wait_ticks,
            deadline_ticks: None,
            nice: 0,
            arrival_tick: 0,
            total_work_ticks: None,
            departure_tick: None,
            jitter_permille: 0,
            class: TaskClass::Background,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::InvalidTask {
                task_id: self.task_id,
                reason: reason.into(),
            })
        };
        if self.burst_ticks == 0 {
            return bad("burst_ticks must be positive");
        }
        if !(-20..=19).contains(&self.nice) {
            return bad("nice must be in [-20, 19]");
        }
        if self.total_work_ticks == Some(0) {
            return bad("total_work_ticks must be positive");
        }
        if self.jitter_permille >= 1000 {
            return bad("jitter_permille must be below 1000");
        }
        match self.behavior {
            Behavior::Interactive | Behavior::FrameLoop => match self.deadline_ticks {
                None | Some(0) => return bad("deadline_ticks required"),
                Some(_) => {}
            },
            _ => {
                if self.deadline_ticks.is_some() {
                    return bad("only interactive and frame_loop tasks carry deadlines");
                }
            }
        }
        if matches!(self.behavior, Behavior::IoCycle | Behavior::NetworkLike | Behavior::Interactive)
            && self.wait_ticks == 0
        {
            return bad("wait_ticks must be positive for this behavior");
        }
        if let Some(d) = self.departure_tick {
            if d <= self.arrival_tick {
                return bad("departure_tick must follow arrival_tick");
            }
        }
        Ok(())
    }
}
