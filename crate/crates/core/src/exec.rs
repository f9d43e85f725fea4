//! Execution of independent jobs. Results always come back in job order, so
//! callers get identical output whether jobs ran sequentially or in parallel.

use alloc::vec::Vec;

pub trait Executor: Sync {
    fn run_all<T, F>(&self, jobs: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn run_all<T, F>(&self, jobs: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..jobs).map(f).collect()
    }
}
