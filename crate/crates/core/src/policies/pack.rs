use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use super::vclock::VClock;
use super::{Policy, PolicyId, TaskIdx, TaskView};

/// Vruntime ordering with cache affinity: a core prefers a task that last
/// ran on it if one is near the front of the queue, and slices are long.
#[derive(Debug, Clone)]
pub struct CorePack {
    slice: u64,
    scan: usize,
    clock: VClock,
    queue: BTreeSet<(u64, TaskIdx)>,
    last_core: Vec<Option<u32>>,
}

impl CorePack {
    pub fn new(slice: u64, scan: usize) -> Self {
        Self {
            slice,
            scan: scan.max(1),
            clock: VClock::default(),
            queue: BTreeSet::new(),
            last_core: Vec::new(),
        }
    }
}

impl Policy for CorePack {
    fn id(&self) -> PolicyId {
        PolicyId::CorePack
    }

    fn on_enqueue(&mut self, task: &TaskView, _now: u64) {
        let vr = self.clock.place(task.idx, task.woke, self.slice);
        if task.idx >= self.last_core.len() {
            self.last_core.resize(task.idx + 1, None);
        }
        self.last_core[task.idx] = task.last_core;
        self.queue.insert((vr, task.idx));
    }

    fn pick_next(&mut self, core: u32, _now: u64) -> Option<TaskIdx> {
        let head = *self.queue.first()?;
        let chosen = self
            .queue
            .iter()
            .take(self.scan)
            .find(|&&(_, idx)| self.last_core[idx] == Some(core))
            .copied()
            .unwrap_or(head);
        self.queue.remove(&chosen);
        self.clock.raise_floor(head.0);
        Some(chosen.1)
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
