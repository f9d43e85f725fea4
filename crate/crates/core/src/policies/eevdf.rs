use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::vclock::VClock;
use super::{Policy, PolicyId, TaskIdx, TaskView};

#[derive(Debug, Clone, Copy)]
struct Entry {
    vr: u64,
    weight: u32,
    deadline: u64,
}

/// Earliest eligible virtual deadline first.
///
/// A queued task is eligible when its virtual runtime does not exceed the
/// weight-averaged virtual runtime of the queue; among eligible tasks the one
/// with the earliest virtual deadline (`vruntime + slice / weight`) runs.
/// An arriving task that is eligible and has an earlier deadline than a
/// running task preempts it.
#[derive(Debug, Clone)]
pub struct EevdfLike {
    slice: u64,
    clock: VClock,
    queue: BTreeMap<TaskIdx, Entry>,
    running_deadline: Vec<u64>,
}

impl EevdfLike {
    pub fn new(slice: u64) -> Self {
        Self {
            slice,
            clock: VClock::default(),
            queue: BTreeMap::new(),
            running_deadline: Vec::new(),
        }
    }

    /// Earliest deadline among eligible queued tasks.
    fn best_eligible(&self) -> Option<(u64, TaskIdx)> {
        let avg = self.avg_vruntime();
        self.queue
            .iter()
            .filter(|(_, e)| u128::from(e.vr) <= avg)
            .map(|(&idx, e)| (e.deadline, idx))
            .min()
    }

    fn avg_vruntime(&self) -> u128 {
        let (mut num, mut den) = (0u128, 0u128);
        for e in self.queue.values() {
            num += u128::from(e.vr) * u128::from(e.weight);
            den += u128::from(e.weight);
        }
        if den == 0 {
            0
        } else {
            num / den
        }
    }
}

impl Policy for EevdfLike {
    fn id(&self) -> PolicyId {
        PolicyId::EevdfLike
    }

    fn on_enqueue(&mut self, task: &TaskView, _now: u64) {
        let vr = self.clock.place(task.idx, task.woke, self.slice);
        let deadline = vr + VClock::span(self.slice, task.weight);
        self.queue.insert(
            task.idx,
            Entry {
                vr,
                weight: task.weight,
                deadline,
            },
        );
    }

    fn pick_next(&mut self, _core: u32, _now: u64) -> Option<TaskIdx> {
        let (deadline, idx) = self.best_eligible()?;
        let min_vr = self.queue.values().map(|e| e.vr).min().unwrap_or(0);
        self.queue.remove(&idx);
        self.clock.raise_floor(min_vr);
        if idx >= self.running_deadline.len() {
            self.running_deadline.resize(idx + 1, 0);
        }
        self.running_deadline[idx] = deadline;
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

    fn should_preempt(&self, _core: u32, running: &TaskView, ran: u64) -> bool {
        if self.queue.is_empty() {
            return false;
        }
        if ran >= self.slice {
            return true;
        }
        let mine = self.running_deadline.get(running.idx).copied().unwrap_or(u64::MAX);
        self.best_eligible().is_some_and(|(d, _)| d < mine)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(idx: TaskIdx) -> TaskView {
        TaskView {
            idx,
            weight: 1024,
            last_core: None,
            woke: false,
            deadline: None,
        }
    }

    #[test]
    fn equal_tasks_alternate() {
        let mut p = EevdfLike::new(30);
        for i in 0..3 {
            p.on_enqueue(&v(i), 0);
        }
        let mut order = Vec::new();
        for _ in 0..9 {
            let t = p.pick_next(0, 0).unwrap();
            p.on_tick(0, &v(t), 30);
            p.on_enqueue(&v(t), 0);
            order.push(t);
        }
        assert_eq!(order, [0, 1, 2, 0, 1, 2, 0, 1, 2]);
    }

    #[test]
    fn waking_task_with_earlier_deadline_preempts() {
        let mut p = EevdfLike::new(30);
        p.on_enqueue(&v(0), 0);
        p.on_enqueue(&v(1), 0);
        assert_eq!(p.pick_next(0, 0), Some(0));
        p.on_tick(0, &v(0), 30);
        p.on_enqueue(&v(0), 30);
        assert_eq!(p.pick_next(0, 30), Some(1));
        p.on_tick(0, &v(1), 5);
        assert_eq!(p.pick_next(0, 35), Some(0));
        p.on_tick(0, &v(0), 2);
        assert!(!p.should_preempt(0, &v(0), 2));
        p.on_enqueue(&TaskView { woke: true, ..v(1) }, 40);
        assert!(p.should_preempt(0, &v(0), 2));
    }

    #[test]
    fn heavier_weight_has_earlier_deadline() {
        let mut p = EevdfLike::new(30);
        p.on_enqueue(&v(0), 0);
        p.on_enqueue(&TaskView { weight: 2048, ..v(1) }, 0);
        assert_eq!(p.pick_next(0, 0), Some(1));
    }

    #[test]
    fn most_behind_task_is_always_eligible() {
        let mut p = EevdfLike::new(30);
        p.on_enqueue(&v(0), 0);
        p.on_tick(0, &v(0), 500);
        p.on_enqueue(&v(1), 0);
        assert!(p.pick_next(0, 0).is_some());
    }
}
