use alloc::collections::VecDeque;

use super::{Policy, PolicyId, TaskIdx, TaskView};

/// Fixed-quantum round robin; preempted and woken tasks join the tail.
#[derive(Debug, Clone)]
pub struct RoundRobin {
    quantum: u64,
    queue: VecDeque<TaskIdx>,
}

impl RoundRobin {
    pub fn new(quantum: u64) -> Self {
        Self {
            quantum,
            queue: VecDeque::new(),
        }
    }
}

impl Policy for RoundRobin {
    fn id(&self) -> PolicyId {
        PolicyId::Rr
    }

    fn on_enqueue(&mut self, task: &TaskView, _now: u64) {
        self.queue.push_back(task.idx);
    }

    fn pick_next(&mut self, _core: u32, _now: u64) -> Option<TaskIdx> {
        self.queue.pop_front()
    }

    fn on_tick(&mut self, _core: u32, _running: &TaskView, _ticks: u64) {}

    fn quantum_for(&self, _task: &TaskView) -> Option<u64> {
        Some(self.quantum)
    }

    fn queued(&self) -> usize {
        self.queue.len()
    }
}
