use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policies::PolicyParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub num_cores: u32,
    pub tick_us: u32,
    pub seed: u64,
    /// Length of the global dispatch stall charged per policy switch.
    pub switch_cost_ticks: u64,
    pub sample_interval_ticks: u64,
    /// Work delivered per tick by a warm core, in thousandths of a work tick.
    pub core_speed_permille: u32,
    /// Ticks a core runs at half speed after switching to a different task.
    pub cache_warmup_ticks: u64,
    pub policies: PolicyParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_cores: 4,
            tick_us: 100,
            seed: 0,
            switch_cost_ticks: 0,
            sample_interval_ticks: 10_000,
            core_speed_permille: 1000,
            cache_warmup_ticks: 0,
            policies: PolicyParams::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_cores == 0 {
            return Err(Error::InvalidConfig("num_cores must be at least 1".into()));
        }
        if self.tick_us == 0 {
            return Err(Error::InvalidConfig("tick_us must be positive".into()));
        }
        if self.sample_interval_ticks == 0 {
            return Err(Error::InvalidConfig(
                "sample_interval_ticks must be at least 1".into(),
            ));
        }
        if self.core_speed_permille == 0 {
            return Err(Error::InvalidConfig("core_speed_permille must be positive".into()));
        }
        self.policies.validate()
    }

    /// Ticks per simulated second.
    pub fn ticks_per_sec(&self) -> f64 {
        1e6 / f64::from(self.tick_us)
    }
}
