use std::time::Instant;

use asa_core::agent::Clock;
use asa_core::exec::Executor;
use rayon::prelude::*;

/// Runs jobs on the rayon pool; results come back in job order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Parallel;

impl Executor for Parallel {
    fn run_all<T, F>(&self, jobs: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..jobs).into_par_iter().map(f).collect()
    }
}

/// Monotonic wall clock for latency measurement.
#[derive(Debug, Clone, Copy)]
pub struct WallClock {
    origin: Instant,
}

impl Default for WallClock {
    fn default() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Clock for WallClock {
    fn now_ns(&self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use asa_core::exec::Sequential;

    #[test]
    fn parallel_keeps_job_order() {
        let f = |i: usize| i * i + 1;
        assert_eq!(Parallel.run_all(1000, f), Sequential.run_all(1000, f));
    }

    #[test]
    fn wall_clock_is_monotonic() {
        let c = WallClock::default();
        let a = c.now_ns();
        let b = c.now_ns();
        assert!(b >= a);
    }
}
