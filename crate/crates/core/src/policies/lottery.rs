use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Policy, PolicyId, TaskIdx, TaskView};

/// Proportional-share lottery: each queued task holds tickets equal to its
/// weight and a seeded draw picks the winner.
#[derive(Debug, Clone)]
pub struct Lottery {
    quantum: u64,
    rng: ChaCha8Rng,
    pool: Vec<(TaskIdx, u64)>,
}

impl Lottery {
    pub fn new(quantum: u64, seed: u64) -> Self {
        Self {
            quantum,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pool: Vec::new(),
        }
    }
}

impl Policy for Lottery {
    fn id(&self) -> PolicyId {
        PolicyId::Lottery
    }

    fn on_enqueue(&mut self, task: &TaskView, _now: u64) {
        self.pool.push((task.idx, u64::from(task.weight.max(1))));
    }

    fn pick_next(&mut self, _core: u32, _now: u64) -> Option<TaskIdx> {
        if self.pool.is_empty() {
            return None;
        }
        let total: u64 = self.pool.iter().map(|&(_, t)| t).sum();
        let mut draw = self.rng.random_range(0..total);
        let mut pos = self.pool.len() - 1;
        for (i, &(_, t)) in self.pool.iter().enumerate() {
            if draw < t {
                pos = i;
                break;
            }
            draw -= t;
        }
        Some(self.pool.remove(pos).0)
    }

    fn on_tick(&mut self, _core: u32, _running: &TaskView, _ticks: u64) {}

    fn quantum_for(&self, _task: &TaskView) -> Option<u64> {
        Some(self.quantum)
    }

    fn queued(&self) -> usize {
        self.pool.len()
    }
}
