//! Weighted virtual-runtime bookkeeping shared by the vruntime-ordered
//! policies.

use alloc::vec::Vec;

use super::TaskIdx;

/// Virtual time advanced per tick by a nice-0 task.
pub(crate) const NICE0_WEIGHT: u64 = 1024;
const SCALE: u64 = NICE0_WEIGHT << 16;

#[derive(Debug, Default, Clone)]
pub(crate) struct VClock {
    vr: Vec<u64>,
    seen: Vec<bool>,
    /// Monotone lower bound on the vruntime of runnable tasks.
    pub floor: u64,
}

pub(crate) fn inv_weight(weight: u32) -> u64 {
    SCALE / u64::from(weight.max(1))
}

impl VClock {
    fn ensure(&mut self, idx: TaskIdx) {
        if idx >= self.vr.len() {
            self.vr.resize(idx + 1, 0);
            self.seen.resize(idx + 1, false);
        }
    }

    /// Virtual length of a `ticks`-long slice for a task of `weight`.
    pub fn span(ticks: u64, weight: u32) -> u64 {
        ticks * inv_weight(weight)
    }

    /// Placement on entering the runnable set: new tasks start at the floor,
    /// waking sleepers get at most half a slice of credit.
    pub fn place(&mut self, idx: TaskIdx, woke: bool, slice: u64) -> u64 {
        self.ensure(idx);
        if !self.seen[idx] {
            self.seen[idx] = true;
            self.vr[idx] = self.floor;
        } else if woke {
            let credit = Self::span(slice, NICE0_WEIGHT as u32) / 2;
            self.vr[idx] = self.vr[idx].max(self.floor.saturating_sub(credit));
        }
        self.vr[idx]
    }

    pub fn charge(&mut self, idx: TaskIdx, weight: u32, ticks: u64) {
        self.ensure(idx);
        self.vr[idx] += Self::span(ticks, weight);
    }

    pub fn raise_floor(&mut self, candidate: u64) {
        self.floor = self.floor.max(candidate);
    }
}
