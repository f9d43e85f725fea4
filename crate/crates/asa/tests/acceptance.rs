//! Acceptance checks AC1 to AC10, one PASS/FAIL line each. Exits non-zero
//! if any check fails.

use std::collections::BTreeMap;
use std::time::Instant;

use asa::report::{read_units_csv, units_csv};
use asa::runtime::{Parallel, WallClock};
use asa_core::agent::{run_agent, AgentConfig, AgentMode, ZeroClock};
use asa_core::eval::{classify_phased, evaluate, inject_noise, summarize, sweep_sequence, Deployment, EvalConfig, SweepConfig};
use asa_core::metrics::SCORE_METRICS;
use asa_core::pipeline::{
    adapt_new_machine, stage1_prototype, stage2_overhead, stage3_generalization, PipelineConfig, StageOutput, GENERAL,
};
use asa_core::policies::{PolicyId, PolicyParams, Portfolio};
use asa_core::sim::{run_simulation, Behavior, Event, SimConfig, SimRun, SimTask, StaticController};
use asa_core::uxscore::{stability_score, value_score, Direction, MetricSeries, ScoreParams};
use asa_core::voting::{aggregate, vote, ProbDist, TieRule, VotingParams};
use asa_core::workloads::{build_phased, build_scenario, catalog, default_profiles, MachineProfile, WorkloadCatalog};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = anyhow::Result<(bool, String)>;

fn profiles(ids: &[&str]) -> Vec<MachineProfile> {
    let all = default_profiles();
    ids.iter().map(|id| all.iter().find(|p| p.profile_id == *id).unwrap().clone()).collect()
}

const PROTOTYPES: [&str; 4] = ["vm120", "vm121", "vm125", "vm128"];
const UNSEEN: [&str; 6] = ["vm122", "vm123", "vm124", "vm126", "vm127", "vm129"];

/// Direct transliteration of the voting algorithm: for every class, sum the
/// filtered, decay-weighted probabilities, newest weight 1.
fn voting_oracle(window: &[Vec<f64>], theta: f64, alpha: f64, current: Option<usize>, keep: bool) -> (Vec<f64>, usize) {
    let w = window.len();
    let n = window[0].len();
    let mut a = vec![0.0; n];
    for c in 0..n {
        for i in 1..=w {
            let p = window[i - 1][c];
            if p > theta {
                a[c] += p * alpha.powi((w - i) as i32);
            }
        }
    }
    let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let winner = match current {
        Some(c) if keep && a[c] == max => c,
        _ => a.iter().position(|&x| x == max).unwrap(),
    };
    (a, winner)
}

fn random_dist(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // Some cases get exact ties and filtered entries on purpose.
    match rng.random_range(0..4) {
        0 => {
            let k = rng.random_range(1..=n);
            (0..n).map(|c| if c < k { 1.0 / k as f64 } else { 0.0 }).collect()
        }
        _ => {
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(2)).collect();
            let s: f64 = v.iter().sum();
            if s == 0.0 {
                (0..n).map(|c| if c == 0 { 1.0 } else { 0.0 }).collect()
            } else {
                v.into_iter().map(|x| x / s).collect()
            }
        }
    }
}

fn ac1() -> Check {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..10);
        let w = rng.random_range(1..16);
        let theta = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..0.6) };
        let alpha = if rng.random_bool(0.1) { 1.0 } else { rng.random_range(0.05..1.0) };
        let keep = rng.random_bool(0.5);
        let window: Vec<Vec<f64>> = (0..w).map(|_| random_dist(&mut rng, n)).collect();
        let current = if rng.random_bool(0.5) { Some(rng.random_range(0..n)) } else { None };
        let params = VotingParams {
            window: w,
            theta_vote: theta,
            alpha,
            tie_rule: if keep { TieRule::KeepCurrent } else { TieRule::LowestClassId },
        };
        let dists: Vec<ProbDist> = window.iter().map(|p| ProbDist::new(p.clone(), 0)).collect();
        let (want_a, want) = voting_oracle(&window, theta, alpha, current, keep);
        let got_a = aggregate(&dists, &params)?;
        let got = vote(&dists, &params, current)?;
        if got != want || got_a != want_a {
            mismatches += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    Ok((mismatches == 0 && secs < 10.0, format!("10000 cases, {mismatches} mismatches, {secs:.2} s")))
}

fn ac2() -> Check {
    let params = VotingParams {
        window: 3,
        theta_vote: 0.15,
        alpha: 0.5,
        tie_rule: TieRule::KeepCurrent,
    };
    let w: Vec<ProbDist> = [[0.9, 0.1], [0.2, 0.8], [0.3, 0.7]]
        .iter()
        .map(|p| ProbDist::new(p.to_vec(), 0))
        .collect();
    let a = aggregate(&w, &params)?;
    let winner = vote(&w, &params, None)?;
    let ok = winner == 1 && (a[0] - 0.625).abs() <= 1e-12 && (a[1] - 1.1).abs() <= 1e-12;
    Ok((ok, format!("A_A = {}, A_B = {}, winner {}", a[0], a[1], ["A", "B"][winner])))
}

fn random_params(rng: &mut ChaCha8Rng) -> ScoreParams {
    ScoreParams {
        k_s: rng.random_range(0.01..10.0),
        gamma_s: rng.random_range(0.2..3.0),
        k_v: rng.random_range(0.01..10.0),
        gamma_v: rng.random_range(0.2..4.0),
        theta: rng.random_range(-100.0..100.0),
        f: rng.random_range(0.01..50.0),
        direction: Direction::LargerBetter,
        w_stability: 0.4,
        w_value: 0.6,
    }
}

fn ac3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_stab, mut worst_mid, mut worst_sym) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let p = random_params(&mut rng);
        let c = rng.random_range(-1e3..1e3);
        let len = rng.random_range(1..50);
        worst_stab = worst_stab.max((stability_score(&MetricSeries::new("m", vec![c; len]), &p) - 1.0).abs());
        let small = ScoreParams { direction: Direction::SmallerBetter, ..p };
        worst_mid = worst_mid.max((value_score(p.theta, &p) - 0.5).abs()).max((value_score(p.theta, &small) - 0.5).abs());
        let x = p.theta + rng.random_range(-5.0..5.0) * p.f;
        worst_sym = worst_sym.max((value_score(x, &p) + value_score(x, &small) - 1.0).abs());
    }
    let mut slope_ok = true;
    let mut detail = String::new();
    for gamma_v in [1.5, 2.0, 3.0] {
        for &(k_v, f, theta) in &[(1.0, 1.0, 0.0), (2.0, 0.3, 5.0), (0.5, 4.0, -2.0)] {
            let p = ScoreParams { k_v, f, theta, gamma_v, ..ScoreParams::default() };
            let h = f / 2.0;
            let slope = |x: f64| (value_score(x + h, &p) - value_score(x - h, &p)) / (2.0 * h);
            let (mid, hi, lo) = (slope(theta), slope(theta + 3.0 * f), slope(theta - 3.0 * f));
            slope_ok &= mid > hi && mid > lo;
            if k_v == 1.0 {
                detail += &format!(" g={gamma_v}: {mid:.4} vs {hi:.2e}/{lo:.2e};");
            }
        }
    }
    let ok = worst_stab == 0.0 && worst_mid <= 1e-12 && worst_sym <= 1e-12 && slope_ok;
    Ok((
        ok,
        format!("max |stab-1| {worst_stab:.1e}, max |v(theta)-0.5| {worst_mid:.1e}, max symmetry err {worst_sym:.1e}; slope at theta vs theta+-3f:{detail}"),
    ))
}

fn conserved(r: &SimRun) -> bool {
    let executed: u64 = r.tasks.iter().map(|t| t.executed_ticks).sum();
    executed == r.totals.busy && r.totals.busy + r.totals.idle + r.totals.stall == u64::from(r.config.num_cores) * r.horizon_ticks
}

fn ac4() -> Check {
    let cat = WorkloadCatalog {
        horizon_ticks: 30_000,
        ..WorkloadCatalog::default()
    };
    let ps = default_profiles();
    let descs = catalog();
    let jobs: Vec<(usize, PolicyId)> = (0..descs.len()).flat_map(|s| PolicyId::ALL.map(|p| (s, p))).collect();
    let results: Vec<anyhow::Result<(bool, bool)>> = asa_core::exec::Executor::run_all(&Parallel, jobs.len(), |j| {
        let (s, p) = jobs[j];
        let prof = &ps[s % ps.len()];
        let sc = build_scenario(&cat, &descs[s].scenario_id, prof, s as u64)?;
        let a = run_simulation(&prof.sim_config(3), &sc, &mut StaticController(p))?;
        let b = run_simulation(&prof.sim_config(3), &sc, &mut StaticController(p))?;
        let same = serde_json::to_vec(&a.trace)? == serde_json::to_vec(&b.trace)?;
        Ok((conserved(&a), same))
    });
    let results = results.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    let broken = results.iter().filter(|r| !r.0).count();
    let differ = results.iter().filter(|r| !r.1).count();

    let tasks: Vec<SimTask> = (1..=4).map(|i| SimTask::new(i, Behavior::CpuBurst, 1_000_000, 0)).collect();
    let sc = asa_core::workloads::Scenario::custom("fair", tasks, 100_000);
    let cfg = SimConfig { num_cores: 1, ..SimConfig::default() };
    let r = run_simulation(&cfg, &sc, &mut StaticController(PolicyId::FairVruntime))?;
    let q = PolicyParams::default().max_quantum();
    let dev = r.tasks.iter().map(|t| t.executed_ticks.abs_diff(25_000)).max().unwrap_or(u64::MAX);
    let ok = broken == 0 && differ == 0 && dev <= q && conserved(&r);
    Ok((
        ok,
        format!("{} runs: {broken} conservation failures, {differ} trace mismatches; fairness max deviation {dev} ticks (quantum {q})", results.len()),
    ))
}

struct Pipeline {
    s1: StageOutput,
    s3: StageOutput,
    secs: f64,
}

fn run_pipeline(cfg: &PipelineConfig, cat: &WorkloadCatalog) -> anyhow::Result<Pipeline> {
    let t0 = Instant::now();
    let protos = profiles(&PROTOTYPES);
    let s1 = stage1_prototype(cfg, cat, &protos, &Parallel)?;
    let s2 = stage2_overhead(cfg, cat, &s1, &protos, &Parallel)?;
    let s3 = stage3_generalization(cfg, cat, &s2, &protos, &Parallel)?;
    Ok(Pipeline {
        s1,
        s3,
        secs: t0.elapsed().as_secs_f64(),
    })
}

fn ac5(p: &Pipeline, adapted: &BTreeMap<String, asa_core::pipeline::Adaptation>) -> Check {
    let acc = p.s1.report.accuracy;
    let a = &adapted[UNSEEN[0]];
    let before = a.report.previous_accuracy.unwrap_or(f64::NAN);
    let after = a.report.accuracy;
    let ok = acc >= 0.90 && after >= before;
    Ok((
        ok,
        format!(
            "holdout accuracy {acc:.4} on {} rows; {} holdout before/after fine-tuning {before:.4} -> {after:.4}",
            p.s1.report.holdout_rows, UNSEEN[0]
        ),
    ))
}

fn ac9(s3: &StageOutput, cat: &WorkloadCatalog, pcfg: &PipelineConfig) -> Check {
    let prof = &profiles(&["vm123"])[0];
    let mapping = s3.mapping_for(GENERAL)?;
    let portfolio = Portfolio::default();
    let (mut checked, mut stalls) = (0usize, 0u64);
    let mut ok = true;
    let mut failures = Vec::new();
    for s in ["S2", "S7", "S13", "S21", "S27"] {
        let sc = build_scenario(cat, s, prof, 21)?;
        let mut sim = prof.sim_config(21);
        sim.switch_cost_ticks = prof.switch_overhead_ticks;
        let run = |mode| {
            let cfg = AgentConfig { mode, ..pcfg.agent.clone() };
            run_agent(&cfg, &sim, &sc, &s3.model, mapping, &portfolio, ZeroClock)
        };
        let shadow = run(AgentMode::Shadow)?;
        let observe = run(AgentMode::ObserveOnly)?;
        let attribution = |r: &SimRun| -> Vec<PolicyId> {
            let mut v: Vec<PolicyId> = r
                .trace
                .iter()
                .filter_map(|e| match e.event {
                    Event::Dispatch { policy, .. } => Some(policy),
                    _ => None,
                })
                .collect();
            v.dedup();
            v
        };
        let shadow_switches = shadow.decisions.iter().filter(|d| d.shadow).count() as u64;
        let cores = u64::from(sim.num_cores);
        let conditions = [
            ("attribution differs", attribution(&shadow.run) == attribution(&observe.run)),
            ("not the initial policy", attribution(&observe.run) == [pcfg.agent.initial_policy]),
            ("policy ticks differ", shadow.run.policy_ticks == observe.run.policy_ticks),
            ("observe-only stalled", observe.run.totals.stall == 0),
            ("stall exceeds shadow switches", shadow.run.totals.stall <= shadow_switches * sim.switch_cost_ticks * cores),
            ("stall without shadow switch", (shadow_switches == 0) == (shadow.run.totals.stall == 0)),
        ];
        for (what, held) in conditions {
            if !held {
                ok = false;
                failures.push(format!("{s}: {what}"));
            }
        }
        checked += shadow.run.trace.iter().filter(|e| matches!(e.event, Event::Dispatch { .. })).count();
        stalls += shadow.run.totals.stall;
    }
    Ok((
        ok,
        format!("5 scenarios on vm123, {checked} shadow dispatches attributed to the active policy; shadow stall core-ticks {stalls}, observe-only 0; failures {failures:?}"),
    ))
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, r: Check| {
        let (ok, detail) = r.unwrap_or_else(|e| (false, format!("error: {e:#}")));
        if !ok {
            failed += 1;
        }
        println!("{name} {} {detail}", if ok { "PASS" } else { "FAIL" });
    };
    report("AC1", ac1());
    report("AC2", ac2());
    report("AC3", ac3());
    report("AC4", ac4());

    let cat = WorkloadCatalog::default();
    let pcfg = PipelineConfig::default();
    let t0 = Instant::now();
    let pipeline = match run_pipeline(&pcfg, &cat) {
        Ok(p) => p,
        Err(e) => {
            for ac in ["AC5", "AC6", "AC7", "AC8", "AC9", "AC10"] {
                report(ac, Err(anyhow::anyhow!("pipeline failed: {e:#}")));
            }
            std::process::exit(1);
        }
    };
    let adapted: anyhow::Result<BTreeMap<String, _>> = profiles(&UNSEEN)
        .iter()
        .map(|p| Ok((p.profile_id.clone(), adapt_new_machine(&pcfg, &cat, &pipeline.s3, p, true, &Parallel)?)))
        .collect();
    let adapted = match adapted {
        Ok(a) => a,
        Err(e) => {
            for ac in ["AC5", "AC6", "AC7", "AC8", "AC9", "AC10"] {
                report(ac, Err(anyhow::anyhow!("adaptation failed: {e:#}")));
            }
            std::process::exit(1);
        }
    };
    report("AC5", ac5(&pipeline, &adapted));

    let ecfg = EvalConfig { repeats: 1, ..EvalConfig::default() };
    let mut deps: BTreeMap<String, Deployment> = adapted
        .iter()
        .map(|(id, a)| {
            let model = a.model.clone().unwrap_or_else(|| pipeline.s3.model.clone());
            (id.clone(), Deployment { model, mapping: a.mapping.clone() })
        })
        .collect();
    deps.insert(
        GENERAL.into(),
        Deployment {
            model: pipeline.s3.model.clone(),
            mapping: pipeline.s3.mapping_for(GENERAL).unwrap().clone(),
        },
    );
    let eval = evaluate(&pcfg, &ecfg, &cat, &profiles(&UNSEEN), &deps, WallClock::default(), &Parallel);
    let elapsed = t0.elapsed().as_secs_f64();
    match &eval {
        Ok(out) => {
            let s = &out.summary;
            let wot = s.win_rate + s.tie_rate;
            let top3 = s.topk_rates[&3];
            report(
                "AC6",
                Ok((
                    wot >= 0.60 && top3 >= 0.60 && elapsed < 900.0,
                    format!(
                        "{} units: win-or-tie {wot:.3} (win {:.3}, tie {:.3}), top-3 {top3:.3}, top-1 {:.3}, mean improvement {:+.4}; pipeline {:.0} s, total {elapsed:.0} s",
                        s.units, s.win_rate, s.tie_rate, s.topk_rates[&1], s.mean_improvement, pipeline.secs
                    ),
                )),
            );
        }
        Err(e) => report("AC6", Err(anyhow::anyhow!("evaluation failed: {e}"))),
    }

    report("AC7", (|| -> Check {
        let prof = &profiles(&["vm124"])[0];
        let phases: Vec<(&str, u64)> = ["S1", "S9", "S16", "S24", "S5", "S12"].iter().map(|s| (*s, 300_000)).collect();
        let sc = build_phased(&cat, "phased", &phases, prof, 11)?;
        let seq = classify_phased(&pipeline.s3.model, &sc, &prof.sim_config(11), PolicyId::BASELINE, &Portfolio::default(), |s| pcfg.label_of(s))?;
        let cfg = SweepConfig { windows: vec![1, 6, 20], ..SweepConfig::default() };
        let rows = sweep_sequence(&inject_noise(&seq, &cfg), &cfg)?;
        let ok = rows[0].error_rate > rows[1].error_rate && rows[2].avg_response_delay_ticks > rows[1].avg_response_delay_ticks;
        let fmt = |i: usize| format!("W={} err {:.3} delay {:.0}", rows[i].window, rows[i].error_rate, rows[i].avg_response_delay_ticks);
        Ok((ok, format!("{}; {}; {}", fmt(0), fmt(1), fmt(2))))
    })());

    report("AC8", match &eval {
        Ok(out) => Ok((
            out.summary.cooldown_violations == 0,
            format!(
                "{} real switches over {} agent runs, {} closer than {} ticks",
                out.summary.real_switches, out.summary.units, out.summary.cooldown_violations, pcfg.agent.cooldown_ticks
            ),
        )),
        Err(e) => Err(anyhow::anyhow!("evaluation failed: {e}")),
    });

    report("AC9", ac9(&pipeline.s3, &cat, &pcfg));

    report("AC10", (|| -> Check {
        let again = run_pipeline(&pcfg, &cat)?;
        let same_maps = again.s3.mappings == pipeline.s3.mappings && again.s3.report.mapping_refs == pipeline.s3.report.mapping_refs;
        let out = eval.as_ref().map_err(|e| anyhow::anyhow!("evaluation failed: {e}"))?;
        let dir = tempfile::tempdir()?;
        let path = dir.path().join("units.csv");
        std::fs::write(&path, units_csv(&out.units))?;
        let back = read_units_csv(&path)?;
        let consistent = summarize(&back, &ecfg)? == out.summary;
        Ok((
            same_maps && consistent,
            format!(
                "{} mapping tables identical on rerun: {same_maps}; summary recomputed from unit table equal: {consistent}",
                pipeline.s3.mappings.len()
            ),
        ))
    })());

    let _ = SCORE_METRICS;
    if failed > 0 {
        std::process::exit(1);
    }
}
