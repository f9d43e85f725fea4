use alloc::collections::BTreeSet;

use super::vclock::VClock;
use super::{Policy, PolicyId, TaskIdx, TaskView};

/// Vruntime ordering with a priority lane for freshly woken and
/// deadline-carrying tasks. A boosted arrival preempts an unboosted runner
/// immediately.
#[derive(Debug, Clone)]
pub struct LatencyBoost {
    slice: u64,
    clock: VClock,
    boosted: BTreeSet<(u64, TaskIdx)>,
    normal: BTreeSet<(u64, TaskIdx)>,
}

impl LatencyBoost {
    pub fn new(slice: u64) -> Self {
        Self {
            slice,
            clock: VClock::default(),
            boosted: BTreeSet::new(),
            normal: BTreeSet::new(),
        }
    }

    fn is_boosted(&self, task: &TaskView, ran: u64) -> bool {
        task.deadline.is_some() || (task.woke && ran < self.slice)
    }
}

impl Policy for LatencyBoost {
    fn id(&self) -> PolicyId {
        PolicyId::LatencyBoost
    }

    fn on_enqueue(&mut self, task: &TaskView, _now: u64) {
        let vr = self.clock.place(task.idx, task.woke, self.slice);
        if self.is_boosted(task, 0) {
            self.boosted.insert((vr, task.idx));
        } else {
            self.normal.insert((vr, task.idx));
        }
    }

    fn pick_next(&mut self, _core: u32, _now: u64) -> Option<TaskIdx> {
        if let Some((_, idx)) = self.boosted.pop_first() {
            return Some(idx);
        }
        let (vr, idx) = self.normal.pop_first()?;
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
        self.boosted.len() + self.normal.len()
    }

    fn should_preempt(&self, _core: u32, running: &TaskView, ran: u64) -> bool {
        if !self.is_boosted(running, ran) && !self.boosted.is_empty() {
            return true;
        }
        ran >= self.slice && self.queued() > 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn woken_task_preempts_hog() {
        let mut p = LatencyBoost::new(30);
        let hog = TaskView {
            idx: 0,
            weight: 1024,
            last_core: None,
            woke: false,
            deadline: None,
        };
        let waker = TaskView {
            idx: 1,
            woke: true,
            ..hog
        };
        assert!(!p.should_preempt(0, &hog, 5));
        p.on_enqueue(&waker, 0);
        assert!(p.should_preempt(0, &hog, 5));
        assert_eq!(p.pick_next(0, 0), Some(1));
    }
}
