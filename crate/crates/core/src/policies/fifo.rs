use alloc::collections::VecDeque;

use super::{Policy, PolicyId, TaskIdx, TaskView};

/// First come, first served. A task keeps its core until it blocks or
/// completes.
#[derive(Debug, Clone, Default)]
pub struct Fifo {
    queue: VecDeque<TaskIdx>,
}

impl Fifo {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Policy for Fifo {
    fn id(&self) -> PolicyId {
        PolicyId::Fifo
    }

    fn on_enqueue(&mut self, task: &TaskView, _now: u64) {
        self.queue.push_back(task.idx);
    }

    fn pick_next(&mut self, _core: u32, _now: u64) -> Option<TaskIdx> {
        self.queue.pop_front()
    }

    fn on_tick(&mut self, _core: u32, _running: &TaskView, _ticks: u64) {}

    fn quantum_for(&self, _task: &TaskView) -> Option<u64> {
        None
    }

    fn queued(&self) -> usize {
        self.queue.len()
    }
}
