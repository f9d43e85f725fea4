use asa_core::policies::{PolicyId, PolicyParams, SliceParams};
use asa_core::sim::{
    run_simulation, Behavior, Engine, Event, ScriptedController, SimConfig, SimRun, SimTask,
    StaticController, SwitchRequest, TraceEvent,
};
use asa_core::workloads::{build_scenario, catalog, default_profiles, Scenario, WorkloadCatalog};

fn hog(id: u32) -> SimTask {
    SimTask::new(id, Behavior::CpuBurst, 1_000_000, 0)
}

fn cfg(cores: u32) -> SimConfig {
    SimConfig {
        num_cores: cores,
        ..SimConfig::default()
    }
}

fn run(cfg: &SimConfig, s: &Scenario, p: PolicyId) -> SimRun {
    run_simulation(cfg, s, &mut StaticController(p)).unwrap()
}

fn conserved(r: &SimRun) -> bool {
    let executed: u64 = r.tasks.iter().map(|t| t.executed_ticks).sum();
    executed == r.totals.busy
        && r.totals.busy + r.totals.idle + r.totals.stall
            == u64::from(r.config.num_cores) * r.horizon_ticks
}

#[test]
fn single_task_completes_at_its_work() {
    let mut t = SimTask::new(1, Behavior::CpuBurst, 1000, 0);
    t.total_work_ticks = Some(1000);
    let s = Scenario::custom("one", vec![t], 2000);
    let r = run(&cfg(1), &s, PolicyId::Fifo);
    assert_eq!(r.tasks[0].completed_at, Some(1000));
    let complete = r
        .trace
        .iter()
        .find(|e| matches!(e.event, Event::Complete { .. }))
        .unwrap();
    assert_eq!(complete.tick, 1000);
    assert_eq!(r.totals.busy, 1000);
    assert_eq!(r.totals.idle, 1000);
}

#[test]
fn zero_cores_rejected() {
    let s = Scenario::custom("one", vec![hog(1)], 100);
    assert!(run_simulation(&cfg(0), &s, &mut StaticController(PolicyId::Fifo)).is_err());
}

#[test]
fn empty_scenario_rejected() {
    let s = Scenario::custom("none", vec![], 100);
    assert!(run_simulation(&cfg(1), &s, &mut StaticController(PolicyId::Fifo)).is_err());
}

#[test]
fn two_tasks_share_one_core_fairly() {
    let s = Scenario::custom("two", vec![hog(1), hog(2)], 10_000);
    let r = run(&cfg(1), &s, PolicyId::FairVruntime);
    let q = PolicyParams::default().max_quantum();
    for t in &r.tasks {
        assert!(t.executed_ticks.abs_diff(5000) <= q, "{t:?}");
    }
}

#[test]
fn four_tasks_fair_for_both_vruntime_policies() {
    let s = Scenario::custom("four", (1..=4).map(hog).collect(), 100_000);
    let q = PolicyParams::default().max_quantum();
    for p in [PolicyId::FairVruntime, PolicyId::EevdfLike] {
        let r = run(&cfg(1), &s, p);
        for t in &r.tasks {
            assert!(t.executed_ticks.abs_diff(25_000) <= q, "{p}: {t:?}");
        }
    }
}

#[test]
fn rr_quantum_four_preempts_on_fourth_tick() {
    let mut c = cfg(1);
    c.policies.rr = SliceParams { slice: 4 };
    let s = Scenario::custom("rr", vec![hog(1), hog(2)], 20);
    let r = run(&c, &s, PolicyId::Rr);
    let first = r
        .trace
        .iter()
        .find(|e| matches!(e.event, Event::Preempt { .. }))
        .unwrap();
    assert_eq!(first.tick, 4);
    assert_eq!(first.task_id, Some(1));
    assert!(matches!(first.event, Event::Preempt { ran_ticks: 4, .. }));
}

#[test]
fn idle_tick_and_single_dispatch() {
    let mut late = hog(1);
    late.arrival_tick = 5;
    let s = Scenario::custom("late", vec![late], 10);
    let mut ctl = StaticController(PolicyId::EevdfLike);
    let mut e = Engine::new(&cfg(2), &s, &ctl).unwrap();
    e.step_tick(&mut ctl).unwrap();
    assert_eq!(e.now(), 1);
    assert_eq!(e.totals().idle, 2);
    assert!(e.trace().is_empty());
    while e.now() < 6 {
        e.step_tick(&mut ctl).unwrap();
    }
    let dispatches = e
        .trace()
        .iter()
        .filter(|ev| matches!(ev.event, Event::Dispatch { .. }))
        .count();
    assert_eq!(dispatches, 1);
}

fn mixed_catalog_runs() -> Vec<(SimConfig, Scenario)> {
    let mut cat = WorkloadCatalog::default();
    cat.horizon_ticks = 25_000;
    let ps = default_profiles();
    let mut out = vec![];
    for (i, d) in catalog().iter().enumerate().step_by(3) {
        let p = &ps[i % ps.len()];
        let s = build_scenario(&cat, &d.scenario_id, p, i as u64).unwrap();
        let mut c = p.sim_config(7);
        c.sample_interval_ticks = 5000;
        out.push((c, s));
    }
    out
}

#[test]
fn conservation_and_determinism_across_policies() {
    for (c, s) in mixed_catalog_runs() {
        for p in PolicyId::ALL {
            let a = run(&c, &s, p);
            assert!(conserved(&a), "{p} {}", s.scenario_id);
            let b = run(&c, &s, p);
            assert_eq!(
                serde_json::to_string(&a.trace).unwrap(),
                serde_json::to_string(&b.trace).unwrap()
            );
        }
    }
}

#[test]
fn ticks_are_nondecreasing_and_causal() {
    for (c, s) in mixed_catalog_runs() {
        let r = run(&c, &s, PolicyId::LatencyBoost);
        let mut blocked = std::collections::BTreeSet::new();
        for w in r.trace.windows(2) {
            assert!(w[0].tick <= w[1].tick);
        }
        for e in &r.trace {
            match e.event {
                Event::Block { .. } => {
                    blocked.insert(e.task_id);
                }
                Event::Wake { .. } => {
                    blocked.remove(&e.task_id);
                }
                Event::Dispatch { .. } => assert!(!blocked.contains(&e.task_id)),
                _ => {}
            }
        }
    }
}

fn stepwise(c: &SimConfig, s: &Scenario, ctl: &mut ScriptedController) -> Vec<TraceEvent> {
    let mut e = Engine::new(c, s, ctl).unwrap();
    while !e.is_finished() {
        e.step_tick(ctl).unwrap();
    }
    e.into_run().trace
}

#[test]
fn fast_forward_matches_single_stepping() {
    let mut cat = WorkloadCatalog::default();
    cat.horizon_ticks = 6_000;
    let ps = default_profiles();
    for (sid, p) in [("S3", &ps[0]), ("S22", &ps[5]), ("S13", &ps[2])] {
        let s = build_scenario(&cat, sid, p, 1).unwrap();
        let mut c = p.sim_config(3);
        c.sample_interval_ticks = 1000;
        c.switch_cost_ticks = 17;
        for initial in PolicyId::ALL {
            let script = vec![
                (2000, SwitchRequest { policy: PolicyId::DeadlineEdf, shadow: false }),
                (3000, SwitchRequest { policy: PolicyId::Rr, shadow: true }),
                (4000, SwitchRequest { policy: PolicyId::Lottery, shadow: false }),
            ];
            let mk = || ScriptedController {
                initial,
                interval: 1000,
                script: script.clone(),
            };
            let fast = run_simulation(&c, &s, &mut mk()).unwrap();
            let slow = stepwise(&c, &s, &mut mk());
            assert_eq!(fast.trace, slow, "{sid} {initial}");
        }
    }
}

#[test]
fn shadow_switch_stalls_without_changing_policy() {
    let s = Scenario::custom("hogs", vec![hog(1), hog(2), hog(3)], 400);
    let mut c = cfg(2);
    c.switch_cost_ticks = 50;
    let mut ctl = ScriptedController {
        initial: PolicyId::EevdfLike,
        interval: 100,
        script: vec![(100, SwitchRequest { policy: PolicyId::Fifo, shadow: true })],
    };
    let r = run_simulation(&c, &s, &mut ctl).unwrap();
    let in_stall = r
        .trace
        .iter()
        .filter(|e| (100..150).contains(&e.tick) && matches!(e.event, Event::Dispatch { .. }))
        .count();
    assert_eq!(in_stall, 0);
    assert_eq!(r.final_policy, PolicyId::EevdfLike);
    assert_eq!(r.totals.stall, 100);
    assert!(conserved(&r));
    assert!(r.trace.iter().all(|e| match e.event {
        Event::Dispatch { policy, .. } => policy == PolicyId::EevdfLike,
        _ => true,
    }));
}

#[test]
fn zero_cost_real_switch_is_instant() {
    let s = Scenario::custom("hogs", vec![hog(1), hog(2)], 300);
    let mut ctl = ScriptedController {
        initial: PolicyId::EevdfLike,
        interval: 100,
        script: vec![(100, SwitchRequest { policy: PolicyId::Rr, shadow: false })],
    };
    let r = run_simulation(&cfg(1), &s, &mut ctl).unwrap();
    let after = r
        .trace
        .iter()
        .find(|e| e.tick >= 100 && matches!(e.event, Event::Dispatch { .. }))
        .unwrap();
    assert_eq!(after.tick, 100);
    assert!(matches!(after.event, Event::Dispatch { policy: PolicyId::Rr, .. }));
    assert_eq!(r.totals.stall, 0);
}

#[test]
fn switching_to_active_policy_is_noop() {
    let s = Scenario::custom("hogs", vec![hog(1), hog(2)], 300);
    let mut c = cfg(1);
    c.switch_cost_ticks = 40;
    let mut ctl = ScriptedController {
        initial: PolicyId::Rr,
        interval: 100,
        script: vec![(100, SwitchRequest { policy: PolicyId::Rr, shadow: false })],
    };
    let r = run_simulation(&c, &s, &mut ctl).unwrap();
    assert_eq!(r.totals.stall, 0);
    assert!(!r.trace.iter().any(|e| matches!(e.event, Event::PolicySwitch { .. })));
}

#[test]
fn shadow_neutrality_single_task() {
    let s = Scenario::custom("solo", vec![hog(1)], 1000);
    let mut c = cfg(1);
    c.switch_cost_ticks = 30;
    let mut shadow = ScriptedController {
        initial: PolicyId::EevdfLike,
        interval: 200,
        script: [200, 400, 600]
            .into_iter()
            .map(|t| (t, SwitchRequest { policy: PolicyId::Lottery, shadow: true }))
            .collect(),
    };
    let with = run_simulation(&c, &s, &mut shadow).unwrap();
    let shorter = Scenario::custom("solo", vec![hog(1)], 1000 - 3 * 30);
    let without = run(&c, &shorter, PolicyId::EevdfLike);
    assert_eq!(with.tasks[0].executed_ticks, without.tasks[0].executed_ticks);
}

#[test]
fn interactive_events_pair_with_responses() {
    let mut cat = WorkloadCatalog::default();
    cat.horizon_ticks = 40_000;
    let p = &default_profiles()[5];
    let s = build_scenario(&cat, "S16", p, 0).unwrap();
    let r = run(&p.sim_config(0), &s, PolicyId::Fifo);
    let mut open = std::collections::BTreeMap::new();
    for e in &r.trace {
        match e.event {
            Event::InputEvent { seq } => {
                assert!(open.insert(e.task_id, seq).is_none());
            }
            Event::InputResponse { seq, .. } => {
                assert_eq!(open.remove(&e.task_id), Some(seq));
            }
            _ => {}
        }
    }
}
