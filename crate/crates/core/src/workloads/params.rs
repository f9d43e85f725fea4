//! Per-kind task templates. The same data ships as a versioned TOML file
//! with the command-line tool.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Behavior;

use super::kinds::{BackgroundKind, InteractiveKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTemplate {
    pub name: String,
    pub behavior: Behavior,
    pub burst_ticks: u64,
    #[serde(default)]
    pub wait_ticks: u64,
    #[serde(default)]
    pub deadline_ticks: Option<u64>,
    #[serde(default)]
    pub nice: i8,
    /// Instances: `max(min_count, count + cores * per_core_permille / 1000)`.
    #[serde(default)]
    pub count: u32,
    #[serde(default)]
    pub per_core_permille: u32,
    #[serde(default)]
    pub min_count: u32,
    #[serde(default)]
    pub total_work_ticks: Option<u64>,
    #[serde(default)]
    pub jitter_permille: u32,
    /// Scale `wait_ticks` by the machine's storage latency.
    #[serde(default)]
    pub io_scaled: bool,
    /// Each instance is a slot that spawns a fresh short-lived task every
    /// `lifetime_ticks`.
    #[serde(default)]
    pub lifetime_ticks: Option<u64>,
}

impl TaskTemplate {
    pub fn instances(&self, cores: u32) -> u32 {
        let scaled = (u64::from(cores) * u64::from(self.per_core_permille) / 1000) as u32;
        (self.count + scaled).max(self.min_count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadCatalog {
    pub version: u32,
    pub horizon_ticks: u64,
    pub kinds: BTreeMap<String, Vec<TaskTemplate>>,
}

impl WorkloadCatalog {
    pub fn templates(&self, kind: &str) -> Result<&[TaskTemplate]> {
        self.kinds
            .get(kind)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownScenario(kind.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon_ticks == 0 {
            return Err(Error::InvalidConfig("catalog horizon_ticks must be positive".into()));
        }
        for k in InteractiveKind::ALL {
            let ts = self.templates(k.as_str())?;
            if !ts.iter().any(|t| t.deadline_ticks.is_some()) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "interactive kind {k} has no deadline-carrying task"
                )));
            }
        }
        for k in BackgroundKind::ALL {
            let ts = self.templates(k.as_str())?;
            if ts.iter().any(|t| t.deadline_ticks.is_some()) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "background kind {k} carries a deadline"
                )));
            }
        }
        Ok(())
    }
}

fn t(name: &str, behavior: Behavior, burst: u64, wait: u64) -> TaskTemplate {
    TaskTemplate {
        name: name.to_string(),
        behavior,
        burst_ticks: burst,
        wait_ticks: wait,
        deadline_ticks: None,
        nice: 0,
        count: 1,
        per_core_permille: 0,
        min_count: 0,
        total_work_ticks: None,
        jitter_permille: 100,
        io_scaled: false,
        lifetime_ticks: None,
    }
}

impl Default for WorkloadCatalog {
    fn default() -> Self {
        use Behavior::*;
        let dl = |mut x: TaskTemplate, d: u64| {
            x.deadline_ticks = Some(d);
            x
        };
        let io = |mut x: TaskTemplate| {
            x.io_scaled = true;
            x
        };
        let n = |mut x: TaskTemplate, count: u32, per_core: u32, min: u32| {
            x.count = count;
            x.per_core_permille = per_core;
            x.min_count = min;
            x
        };
        let mut kinds = BTreeMap::new();
        kinds.insert(
            "game_play".into(),
            vec![
                dl(t("render", FrameLoop, 60, 106), 166),
                t("world_sim", CpuBurst, 40, 126),
                dl(t("player_input", Interactive, 15, 500), 160),
            ],
        );
        kinds.insert(
            "office_edit".into(),
            vec![
                dl(t("typing", Interactive, 25, 700), 300),
                io(t("autosave", IoCycle, 50, 3000)),
                t("spellcheck", CpuBurst, 100, 2000),
            ],
        );
        kinds.insert(
            "web_browse".into(),
            vec![
                dl(t("click", Interactive, 80, 2500), 500),
                dl(t("scroll_render", FrameLoop, 30, 136), 332),
                t("fetch", NetworkLike, 10, 200),
            ],
        );
        kinds.insert(
            "audio_remix".into(),
            vec![
                dl(t("audio_callback", FrameLoop, 8, 42), 50),
                n(t("effects", CpuBurst, 20, 30), 2, 0, 0),
                dl(t("mixer_ui", Interactive, 40, 8000), 1000),
            ],
        );
        kinds.insert(
            "archive_extract".into(),
            vec![n(io(t("extract", IoCycle, 60, 25)), 2, 0, 0)],
        );
        kinds.insert(
            "blender_render".into(),
            vec![{
                let mut x = n(t("render_worker", CpuBurst, 1000, 0), 0, 1000, 1);
                x.jitter_permille = 0;
                x
            }],
        );
        kinds.insert(
            "kernel_compile".into(),
            vec![{
                let mut x = n(io(t("cc_job", IoCycle, 150, 20)), 0, 1500, 2);
                x.lifetime_ticks = Some(3000);
                x
            }],
        );
        kinds.insert(
            "llm_generate".into(),
            vec![n(t("inference_thread", CpuBurst, 3000, 1500), 0, 1000, 1)],
        );
        kinds.insert(
            "disk_io".into(),
            vec![n(io(t("io_worker", IoCycle, 8, 60)), 4, 0, 0)],
        );
        kinds.insert(
            "network_transfer".into(),
            vec![n(t("stream", NetworkLike, 6, 12), 3, 0, 0)],
        );
        kinds.insert(
            "video_render".into(),
            vec![n(io(t("encoder", IoCycle, 1500, 40)), 0, 500, 2)],
        );
        Self {
            version: 1,
            horizon_ticks: 120_000,
            kinds,
        }
    }
}
