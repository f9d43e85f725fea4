use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{str_key, stream};
use crate::sim::{SimTask, TaskClass};

use super::kinds::{descriptor, BackgroundKind, InteractiveKind};
use super::params::{TaskTemplate, WorkloadCatalog};
use super::profiles::MachineProfile;

/// Ground-truth segment of a phased scenario.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub start_tick: u64,
    pub end_tick: u64,
    pub scenario_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub scenario_id: String,
    pub interactive_kind: Option<InteractiveKind>,
    pub background_kind: Option<BackgroundKind>,
    /// Classifier ground truth; the canonical scenario id for catalog
    /// scenarios.
    pub label: String,
    pub tasks: Vec<SimTask>,
    pub horizon_ticks: u64,
    #[serde(default)]
    pub phases: Vec<Phase>,
}

impl Scenario {
    /// A free-form scenario outside the catalog.
    pub fn custom(scenario_id: impl Into<String>, tasks: Vec<SimTask>, horizon_ticks: u64) -> Self {
        let scenario_id = scenario_id.into();
        Self {
            label: scenario_id.clone(),
            scenario_id,
            interactive_kind: None,
            background_kind: None,
            tasks,
            horizon_ticks,
            phases: Vec::new(),
        }
    }

    /// Ground-truth scenario id active at `tick`.
    pub fn phase_at(&self, tick: u64) -> &str {
        self.phases
            .iter()
            .find(|p| p.start_tick <= tick && tick < p.end_tick)
            .map_or(self.scenario_id.as_str(), |p| p.scenario_id.as_str())
    }
}

struct Builder<'a> {
    profile: &'a MachineProfile,
    rng: rand_chacha::ChaCha8Rng,
    next_id: u32,
    tasks: Vec<SimTask>,
}

impl Builder<'_> {
    /// Add instances of `tpl` living in `[start, end)`; `end` equal to the
    /// horizon means they never leave.
    fn add(&mut self, tpl: &TaskTemplate, class: TaskClass, start: u64, end: u64, horizon: u64) {
        let wait = if tpl.io_scaled {
            self.profile.scale_io(tpl.wait_ticks)
        } else {
            tpl.wait_ticks
        };
        for _ in 0..tpl.instances(self.profile.num_cores) {
            let offset = self.rng.random_range(0..100u64);
            let spawn = |arrival: u64, departure: Option<u64>, next_id: &mut u32| {
                let mut task = SimTask::new(*next_id, tpl.behavior, tpl.burst_ticks, wait);
                *next_id += 1;
                task.deadline_ticks = tpl.deadline_ticks;
                task.nice = tpl.nice;
                task.arrival_tick = arrival;
                task.total_work_ticks = tpl.total_work_ticks;
                task.departure_tick = departure;
                task.jitter_permille = tpl.jitter_permille;
                task.class = class;
                task
            };
            match tpl.lifetime_ticks {
                Some(life) if life > 0 => {
                    let mut arrival = start + offset;
                    while arrival < end {
                        let t = spawn(arrival, Some((arrival + life).min(end)), &mut self.next_id);
                        if t.departure_tick.is_some_and(|d| d > arrival) {
                            self.tasks.push(t);
                        }
                        arrival += life;
                    }
                }
                _ => {
                    let arrival = start + offset;
                    if arrival < end {
                        let departure = (end < horizon).then_some(end);
                        let t = spawn(arrival, departure, &mut self.next_id);
                        self.tasks.push(t);
                    }
                }
            }
        }
    }

    fn add_pair(
        &mut self,
        catalog: &WorkloadCatalog,
        ik: InteractiveKind,
        bk: BackgroundKind,
        start: u64,
        end: u64,
        horizon: u64,
    ) -> Result<()> {
        for tpl in catalog.templates(ik.as_str())? {
            self.add(tpl, TaskClass::Foreground, start, end, horizon);
        }
        for tpl in catalog.templates(bk.as_str())? {
            self.add(tpl, TaskClass::Background, start, end, horizon);
        }
        Ok(())
    }
}

/// Build a canonical scenario for `profile`. Pure in its inputs.
pub fn build_scenario(
    catalog: &WorkloadCatalog,
    scenario_id: &str,
    profile: &MachineProfile,
    seed: u64,
) -> Result<Scenario> {
    profile.validate()?;
    let d = descriptor(scenario_id)?;
    let mut b = Builder {
        profile,
        rng: stream(seed, str_key(scenario_id) ^ str_key(&profile.profile_id)),
        next_id: 1,
        tasks: Vec::new(),
    };
    let h = catalog.horizon_ticks;
    b.add_pair(catalog, d.interactive_kind, d.background_kind, 0, h, h)?;
    Ok(Scenario {
        scenario_id: d.scenario_id.clone(),
        interactive_kind: Some(d.interactive_kind),
        background_kind: Some(d.background_kind),
        label: d.scenario_id,
        tasks: b.tasks,
        horizon_ticks: catalog.horizon_ticks,
        phases: Vec::new(),
    })
}

/// Concatenate canonical scenarios back to back. Tasks of each phase arrive
/// at its start and leave at its end.
pub fn build_phased(
    catalog: &WorkloadCatalog,
    name: &str,
    phases: &[(&str, u64)],
    profile: &MachineProfile,
    seed: u64,
) -> Result<Scenario> {
    profile.validate()?;
    if phases.is_empty() || phases.iter().any(|&(_, len)| len == 0) {
        return Err(Error::InvalidConfig("phases must be non-empty with positive lengths".into()));
    }
    let mut b = Builder {
        profile,
        rng: stream(seed, str_key(name) ^ str_key(&profile.profile_id)),
        next_id: 1,
        tasks: Vec::new(),
    };
    let mut out_phases = Vec::new();
    let mut start = 0;
    let horizon: u64 = phases.iter().map(|&(_, len)| len).sum();
    for &(id, len) in phases {
        let d = descriptor(id)?;
        b.add_pair(catalog, d.interactive_kind, d.background_kind, start, start + len, horizon)?;
        out_phases.push(Phase {
            start_tick: start,
            end_tick: start + len,
            scenario_id: d.scenario_id,
        });
        start += len;
    }
    let first = descriptor(phases[0].0)?;
    Ok(Scenario {
        scenario_id: name.into(),
        interactive_kind: Some(first.interactive_kind),
        background_kind: Some(first.background_kind),
        label: first.scenario_id,
        tasks: b.tasks,
        horizon_ticks: start,
        phases: out_phases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Behavior;
    use crate::workloads::{catalog, default_profiles};

    #[test]
    fn deterministic_and_profile_scaled() {
        let cat = WorkloadCatalog::default();
        let ps = default_profiles();
        let a = build_scenario(&cat, "S2", &ps[0], 1).unwrap();
        assert_eq!(a, build_scenario(&cat, "S2", &ps[0], 1).unwrap());
        let big = build_scenario(&cat, "S2", &ps[6], 1).unwrap();
        assert!(big.tasks.len() > a.tasks.len());
    }

    #[test]
    fn game_archive_shape() {
        let cat = WorkloadCatalog::default();
        let s = build_scenario(&cat, "S1", &default_profiles()[0], 0).unwrap();
        assert!(s
            .tasks
            .iter()
            .any(|t| t.behavior == Behavior::FrameLoop && t.deadline_ticks.is_some()));
        assert!(s
            .tasks
            .iter()
            .any(|t| t.class == TaskClass::Background && t.behavior == Behavior::IoCycle));
    }

    #[test]
    fn deadlines_only_on_foreground() {
        let cat = WorkloadCatalog::default();
        let p = &default_profiles()[2];
        for d in catalog() {
            let s = build_scenario(&cat, &d.scenario_id, p, 3).unwrap();
            for t in &s.tasks {
                t.validate().unwrap();
                if t.class == TaskClass::Background {
                    assert!(t.deadline_ticks.is_none());
                }
            }
            assert!(s.tasks.iter().any(|t| t.deadline_ticks.is_some()));
        }
    }

    #[test]
    fn phased_ground_truth() {
        let cat = WorkloadCatalog::default();
        let s = build_phased(&cat, "P", &[("S1", 1000), ("S4", 2000)], &default_profiles()[0], 0)
            .unwrap();
        assert_eq!(s.horizon_ticks, 3000);
        assert_eq!(s.phase_at(999), "S1");
        assert_eq!(s.phase_at(1000), "S4");
        assert!(s.tasks.iter().any(|t| t.departure_tick == Some(1000)));
        assert!(s.tasks.iter().all(|t| t.departure_tick != Some(3000)));
    }
}
