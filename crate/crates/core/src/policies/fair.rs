use alloc::collections::BTreeSet;

use super::vclock::VClock;
use super::{Policy, PolicyId, TaskIdx, TaskView};

/// Runs the runnable task with the smallest weighted virtual runtime.
#[derive(Debug, Clone)]
pub struct FairVruntime {
    slice: u64,
    clock: VClock,
    queue: BTreeSet<(u64, TaskIdx)>,
}

impl FairVruntime {
    pub fn new(slice: u64) -> Self {
        Self {
            slice,
            clock: VClock::default(),
            queue: BTreeSet::new(),
        }
    }
}

impl Policy for FairVruntime {
    fn id(&self) -> PolicyId {
        PolicyId::FairVruntime
    }

    fn on_enqueue(&mut self, task: &TaskView, _now: u64) {
        let vr = self.clock.place(task.idx, task.woke, self.slice);
        self.queue.insert((vr, task.idx));
    }

    fn pick_next(&mut self, _core: u32, _now: u64) -> Option<TaskIdx> {
        let (vr, idx) = self.queue.pop_first()?;
        self.clock.raise_floor(vr);
        Some(idx)
    }

    fn on_tick(&mut self, _core: u32, running: &TaskView, ticks: u64) {
        self.clock.charge(running.idx, running.weight, ticks);
    }

    fn quantum_for(&self, _task: &TaskView) -> Option<u64> {
        Some(self.slice)
    }

    fn queued(&self) -> usize {
        self.queue.len()
    }
}
