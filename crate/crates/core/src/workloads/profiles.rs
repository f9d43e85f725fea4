use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::SimConfig;

/// Simulated stand-in for a hardware platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineProfile {
    pub profile_id: String,
    #[serde(default)]
    pub description: String,
    pub num_cores: u32,
    /// Work ticks delivered per wall tick by a warm core.
    pub core_speed_factor: f64,
    /// Typical storage latency; IO waits in the catalog are written for a
    /// latency of [`REFERENCE_IO_LATENCY`] and scaled by this.
    pub io_latency_ticks: u64,
    /// In `[0, 1]`; longer cache warm-up after context switches.
    pub mem_pressure_factor: f64,
    /// Real cost of swapping the active scheduler on this machine. Not read
    /// by the agent directly; the pipeline measures it.
    pub switch_overhead_ticks: u64,
    #[serde(default)]
    pub prototype: bool,
}

pub const REFERENCE_IO_LATENCY: u64 = 20;

impl MachineProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(alloc::format!("profile {}: {m}", self.profile_id)));
        if self.num_cores == 0 {
            return bad("num_cores must be at least 1");
        }
        if !(self.core_speed_factor > 0.0 && self.core_speed_factor.is_finite()) {
            return bad("core_speed_factor must be positive");
        }
        if self.io_latency_ticks == 0 {
            return bad("io_latency_ticks must be positive");
        }
        if !(0.0..=1.0).contains(&self.mem_pressure_factor) {
            return bad("mem_pressure_factor must be in [0, 1]");
        }
        Ok(())
    }

    /// Engine configuration for this machine. The switch cost starts at
    /// zero; callers that model switching set it explicitly.
    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            num_cores: self.num_cores,
            seed,
            core_speed_permille: libm::round(self.core_speed_factor * 1000.0).max(1.0) as u32,
            cache_warmup_ticks: libm::round(4.0 + 12.0 * self.mem_pressure_factor) as u64,
            ..SimConfig::default()
        }
    }

    /// Scale a catalog IO wait to this machine.
    pub fn scale_io(&self, wait_ticks: u64) -> u64 {
        (wait_ticks * self.io_latency_ticks).div_ceil(REFERENCE_IO_LATENCY).max(1)
    }
}

#[allow(clippy::too_many_arguments)]
fn p(
    id: &str,
    description: &str,
    num_cores: u32,
    core_speed_factor: f64,
    io_latency_ticks: u64,
    mem_pressure_factor: f64,
    switch_overhead_ticks: u64,
    prototype: bool,
) -> MachineProfile {
    MachineProfile {
        profile_id: id.to_string(),
        description: description.to_string(),
        num_cores,
        core_speed_factor,
        io_latency_ticks,
        mem_pressure_factor,
        switch_overhead_ticks,
        prototype,
    }
}

/// Ten machines from 2 to 20 cores; four of them are prototypes.
pub fn default_profiles() -> Vec<MachineProfile> {
    alloc::vec![
        p("vm120", "i5-6500 class, 4 cores, 8 GB", 4, 1.0, 20, 0.6, 30, true),
        p("vm121", "i5-6500 class, 4 cores, 16 GB", 4, 1.0, 20, 0.2, 30, true),
        p("vm122", "i5-9400 class, 6 cores, 12 GB", 6, 1.15, 18, 0.4, 25, false),
        p("vm123", "i5-9400 class, 6 cores, 16 GB", 6, 1.15, 18, 0.2, 25, false),
        p("vm124", "i5-9400 class, 4 cores, 8 GB", 4, 1.15, 18, 0.6, 25, false),
        p("vm125", "i5-9400 class, 2 cores, 8 GB", 2, 1.15, 18, 0.6, 25, true),
        p("vm126", "i7-12700 class, 20 threads, 16 GB", 20, 1.5, 16, 0.2, 15, false),
        p("vm127", "i7-12700 class, 16 threads, 16 GB", 16, 1.5, 16, 0.2, 15, false),
        p("vm128", "i7-12700 class, 12 threads, 16 GB", 12, 1.5, 16, 0.2, 15, true),
        p("vm129", "i7-12700 class, 12 threads hybrid, 16 GB", 12, 1.4, 16, 0.2, 15, false),
    ]
}

pub fn find_profile<'a>(profiles: &'a [MachineProfile], id: &str) -> Result<&'a MachineProfile> {
    profiles
        .iter()
        .find(|p| p.profile_id == id)
        .ok_or_else(|| Error::UnknownProfile(id.to_string()))
}
