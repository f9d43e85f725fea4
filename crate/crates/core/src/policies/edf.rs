use alloc::collections::BTreeSet;

use super::vclock::VClock;
use super::{Policy, PolicyId, TaskIdx, TaskView};

/// Earliest deadline first for tasks with a pending deadline, vruntime
/// order for everything else. Deadline work always runs ahead of
/// best-effort work and is preempted only by an earlier deadline.
#[derive(Debug, Clone)]
pub struct DeadlineEdf {
    slice: u64,
    clock: VClock,
    timed: BTreeSet<(u64, TaskIdx)>,
    best_effort: BTreeSet<(u64, TaskIdx)>,
}

impl DeadlineEdf {
    pub fn new(slice: u64) -> Self {
        Self {
            slice,
            clock: VClock::default(),
            timed: BTreeSet::new(),
            best_effort: BTreeSet::new(),
        }
    }
}

impl Policy for DeadlineEdf {
    fn id(&self) -> PolicyId {
        PolicyId::DeadlineEdf
    }

    fn on_enqueue(&mut self, task: &TaskView, _now: u64) {
        let vr = self.clock.place(task.idx, task.woke, self.slice);
        match task.deadline {
            Some(d) => self.timed.insert((d, task.idx)),
            None => self.best_effort.insert((vr, task.idx)),
        };
    }

    fn pick_next(&mut self, _core: u32, _now: u64) -> Option<TaskIdx> {
        if let Some((_, idx)) = self.timed.pop_first() {
            return Some(idx);
        }
        let (vr, idx) = self.best_effort.pop_first()?;
        self.clock.raise_floor(vr);
        Some(idx)
    }

    fn on_tick(&mut self, _core: u32, running: &TaskView, ticks: u64) {
        self.clock.charge(running.idx, running.weight, ticks);
    }

    fn quantum_for(&self, task: &TaskView) -> Option<u64> {
        match task.deadline {
            Some(_) => None,
            None => Some(self.slice),
        }
    }

    fn queued(&self) -> usize {
        self.timed.len() + self.best_effort.len()
    }

    fn should_preempt(&self, _core: u32, running: &TaskView, ran: u64) -> bool {
        let earliest = self.timed.first().map(|&(d, _)| d);
        match (running.deadline, earliest) {
            (Some(mine), Some(other)) => other < mine,
            (Some(_), None) => false,
            (None, Some(_)) => true,
            (None, None) => ran >= self.slice && !self.best_effort.is_empty(),
        }
    }
}
