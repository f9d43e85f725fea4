//! Agent versus static policies: win/loss against a baseline, Top-K,
//! Static-Oracle gap, window-length sweep and latency statistics.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Clock, DecisionRecord, MappingTable};
use crate::classify::{predict_proba, ForestModel};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::metrics::{run_features, ScoreSeries};
use crate::pipeline::{agent_outcome, static_run, PipelineConfig, GENERAL};
use crate::policies::{PolicyId, Portfolio};
use crate::rng::{str_key, stream};
use crate::sim::{run_with_portfolio, SimConfig, StaticController};
use crate::uxscore::{calibrate, score_from_series};
use crate::voting::{push_and_vote, ProbDist, VotingParams, VotingState};
use crate::workloads::{MachineProfile, Scenario, WorkloadCatalog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub repeats: u32,
    /// Seeds are `seed, seed + 1, ...`.
    pub seed: u64,
    pub tie_epsilon: f64,
    pub baseline: PolicyId,
    pub bootstrap_resamples: u32,
    pub bootstrap_seed: u64,
    pub confidence: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            repeats: 3,
            seed: 1000,
            tie_epsilon: 1e-4,
            baseline: PolicyId::BASELINE,
            bootstrap_resamples: 2000,
            bootstrap_seed: 0,
            confidence: 0.95,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 || self.bootstrap_resamples == 0 {
            return Err(Error::InvalidConfig("repeats and bootstrap_resamples must be positive".into()));
        }
        if !(self.tie_epsilon >= 0.0) || !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidConfig("tie_epsilon must be >= 0 and confidence in (0, 1)".into()));
        }
        Ok(())
    }
}

/// What the agent runs with on one machine.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub model: ForestModel,
    pub mapping: MappingTable,
}

/// One (scenario, machine) pair, scores averaged over repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonUnit {
    pub scenario_id: String,
    pub profile_id: String,
    pub asa_score: f64,
    pub per_policy_scores: BTreeMap<PolicyId, f64>,
    /// Policy the agent ran for the most ticks, summed over repeats.
    pub asa_policy: PolicyId,
    pub real_switches: u32,
    /// Pairs of consecutive real switches closer than the cooldown.
    pub cooldown_violations: u32,
}

impl ComparisonUnit {
    pub fn oracle_score(&self) -> f64 {
        self.per_policy_scores.values().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// 1-based rank of `policy` among the static scores; policies within
    /// `eps` of it do not push it down.
    pub fn rank_of(&self, policy: PolicyId, eps: f64) -> usize {
        let s = self.per_policy_scores[&policy];
        1 + self.per_policy_scores.values().filter(|&&v| v > s + eps).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub baseline: PolicyId,
    pub units: usize,
    pub win_rate: f64,
    pub loss_rate: f64,
    pub tie_rate: f64,
    pub mean_improvement: f64,
    pub improvement_ci: Interval,
    /// Share of units whose agent-chosen policy ranks within the top k.
    pub topk_rates: BTreeMap<usize, f64>,
    /// Geometric mean of `1 + improvement` per machine, minus one.
    pub per_profile_geomean: BTreeMap<String, f64>,
    pub static_oracle_gap: f64,
    /// Units where the agent beat every static policy.
    pub above_oracle: Vec<(String, String)>,
    pub real_switches: u32,
    pub cooldown_violations: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub units: Vec<ComparisonUnit>,
    pub summary: EvalSummary,
    pub decisions: Vec<DecisionRecord>,
}

pub fn improvement(unit: &ComparisonUnit, baseline: PolicyId) -> Result<f64> {
    let base = *unit
        .per_policy_scores
        .get(&baseline)
        .ok_or(Error::PolicyNotInPortfolio(baseline))?;
    if !(base > 0.0) {
        return Err(Error::InvalidScoreParams(alloc::format!(
            "baseline score {base} for {}/{} is not positive",
            unit.scenario_id, unit.profile_id
        )));
    }
    Ok((unit.asa_score - base) / base)
}

/// Aggregate a unit table. Pure, so a table read back from disk reproduces
/// the summary exactly.
pub fn summarize(units: &[ComparisonUnit], cfg: &EvalConfig) -> Result<EvalSummary> {
    cfg.validate()?;
    if units.is_empty() {
        return Err(Error::MissingArtifact("no comparison units".into()));
    }
    let n = units.len() as f64;
    let eps = cfg.tie_epsilon;
    let (mut win, mut loss) = (0usize, 0usize);
    let mut imps = Vec::with_capacity(units.len());
    let mut per_profile: BTreeMap<String, (f64, u32)> = BTreeMap::new();
    let mut gap = 0.0;
    let mut above = Vec::new();
    let k_max = units[0].per_policy_scores.len();
    let mut topk = alloc::vec![0usize; k_max + 1];
    for u in units {
        if u.per_policy_scores.len() != k_max {
            return Err(Error::InvalidConfig("units disagree on the portfolio".into()));
        }
        let imp = improvement(u, cfg.baseline)?;
        let d = u.asa_score - u.per_policy_scores[&cfg.baseline];
        if d > eps {
            win += 1;
        } else if d < -eps {
            loss += 1;
        }
        imps.push(imp);
        let e = per_profile.entry(u.profile_id.clone()).or_insert((0.0, 0));
        e.0 += libm::log1p(imp);
        e.1 += 1;
        let oracle = u.oracle_score();
        gap += u.asa_score - oracle;
        if u.asa_score > oracle + eps {
            above.push((u.scenario_id.clone(), u.profile_id.clone()));
        }
        if !u.per_policy_scores.contains_key(&u.asa_policy) {
            return Err(Error::PolicyNotInPortfolio(u.asa_policy));
        }
        topk[u.rank_of(u.asa_policy, eps)] += 1;
    }
    let mut topk_rates = BTreeMap::new();
    let mut acc = 0;
    for (k, c) in topk.iter().enumerate().skip(1) {
        acc += c;
        topk_rates.insert(k, acc as f64 / n);
    }
    let tie = units.len() - win - loss;
    Ok(EvalSummary {
        baseline: cfg.baseline,
        units: units.len(),
        win_rate: win as f64 / n,
        loss_rate: loss as f64 / n,
        tie_rate: tie as f64 / n,
        mean_improvement: imps.iter().sum::<f64>() / n,
        improvement_ci: bootstrap_ci(&imps, cfg),
        topk_rates,
        per_profile_geomean: per_profile
            .into_iter()
            .map(|(p, (s, c))| (p, libm::expm1(s / c as f64)))
            .collect(),
        static_oracle_gap: gap / n,
        above_oracle: above,
        real_switches: units.iter().map(|u| u.real_switches).sum(),
        cooldown_violations: units.iter().map(|u| u.cooldown_violations).sum(),
    })
}

/// Percentile bootstrap of the mean.
pub fn bootstrap_ci(values: &[f64], cfg: &EvalConfig) -> Interval {
    let n = values.len();
    let mut rng = stream(cfg.bootstrap_seed, str_key("bootstrap"));
    let mut means: Vec<f64> = (0..cfg.bootstrap_resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - cfg.confidence) / 2.0;
    Interval {
        lo: nearest_rank(&means, tail * 100.0),
        hi: nearest_rank(&means, (1.0 - tail) * 100.0),
    }
}

/// Nearest-rank percentile of sorted data.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    let rank = libm::ceil(pct / 100.0 * n as f64) as usize;
    sorted[rank.clamp(1, n) - 1]
}

fn deployment<'a>(deployments: &'a BTreeMap<String, Deployment>, profile_id: &str) -> Result<&'a Deployment> {
    deployments
        .get(profile_id)
        .or_else(|| deployments.get(GENERAL))
        .ok_or_else(|| Error::MissingArtifact(alloc::format!("no deployment for machine {profile_id}")))
}

fn violations(ticks: &[u64], cooldown: u64) -> u32 {
    ticks.windows(2).filter(|w| w[1] - w[0] < cooldown).count() as u32
}

/// Run every static policy and the agent on every (scenario, machine) pair.
///
/// Each unit is calibrated on its static runs only, then all of its runs,
/// agent included, are scored against that calibration.
pub fn evaluate<E: Executor, C: Clock + Clone + Sync>(
    pcfg: &PipelineConfig,
    cfg: &EvalConfig,
    cat: &WorkloadCatalog,
    profiles: &[MachineProfile],
    deployments: &BTreeMap<String, Deployment>,
    clock: C,
    exec: &E,
) -> Result<EvalRun> {
    pcfg.validate()?;
    cfg.validate()?;
    let portfolio = pcfg.portfolio()?;
    if !portfolio.contains(cfg.baseline) {
        return Err(Error::PolicyNotInPortfolio(cfg.baseline));
    }
    for p in profiles {
        p.validate()?;
        deployment(deployments, &p.profile_id)?;
    }
    let n_pol = pcfg.portfolio.len();
    let per_unit = cfg.repeats as usize * (n_pol + 1);
    let n_units = profiles.len() * pcfg.scenarios.len();
    let outcomes = exec.run_all(n_units * per_unit, |j| {
        let unit = j / per_unit;
        let (p, s) = (unit / pcfg.scenarios.len(), unit % pcfg.scenarios.len());
        let r = (j % per_unit) / (n_pol + 1);
        let k = j % (n_pol + 1);
        let seed = cfg.seed + r as u64;
        let (prof, scen) = (&profiles[p], pcfg.scenarios[s].as_str());
        if k < n_pol {
            static_run(pcfg, cat, prof, scen, seed, pcfg.portfolio[k])
        } else {
            let d = deployment(deployments, &prof.profile_id)?;
            agent_outcome(pcfg, cat, prof, scen, seed, &pcfg.agent, &d.model, &d.mapping, clock.clone())
        }
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let mut units = Vec::with_capacity(n_units);
    let mut decisions = Vec::new();
    for (u, chunk) in outcomes.chunks(per_unit).enumerate() {
        let (p, s) = (u / pcfg.scenarios.len(), u % pcfg.scenarios.len());
        let statics: Vec<&ScoreSeries> = chunk
            .iter()
            .enumerate()
            .filter(|(i, _)| i % (n_pol + 1) < n_pol)
            .map(|(_, o)| &o.series)
            .collect();
        let specs = calibrate(&statics, &pcfg.scoring)?;
        let mut sums = alloc::vec![0.0; n_pol + 1];
        let mut ticks: BTreeMap<PolicyId, u64> = BTreeMap::new();
        let (mut switches, mut bad) = (0, 0);
        for (i, o) in chunk.iter().enumerate() {
            sums[i % (n_pol + 1)] += score_from_series(&o.series, &specs)?.overall;
            if i % (n_pol + 1) == n_pol {
                for &(pol, t) in &o.policy_ticks {
                    *ticks.entry(pol).or_default() += t;
                }
                switches += o.switches();
                bad += violations(&o.switch_ticks, pcfg.agent.cooldown_ticks);
                decisions.extend(o.decisions.iter().cloned());
            }
        }
        let reps = f64::from(cfg.repeats);
        // Most ticks wins; ties go to portfolio order.
        let asa_policy = pcfg
            .portfolio
            .iter()
            .copied()
            .fold((pcfg.portfolio[0], 0u64), |best, pol| {
                let t = ticks.get(&pol).copied().unwrap_or(0);
                if t > best.1 { (pol, t) } else { best }
            })
            .0;
        units.push(ComparisonUnit {
            scenario_id: pcfg.scenarios[s].clone(),
            profile_id: profiles[p].profile_id.clone(),
            asa_score: sums[n_pol] / reps,
            per_policy_scores: pcfg.portfolio.iter().zip(&sums).map(|(&pol, &v)| (pol, v / reps)).collect(),
            asa_policy,
            real_switches: switches,
            cooldown_violations: bad,
        });
    }
    let summary = summarize(&units, cfg)?;
    Ok(EvalRun {
        units,
        summary,
        decisions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub windows: Vec<usize>,
    /// Voting parameters other than the window length.
    pub voting: VotingParams,
    /// Chance that a decision's distribution is replaced by a wrong guess.
    pub noise_rate: f64,
    /// Probability the wrong guess puts on its class.
    pub noise_peak: f64,
    pub noise_seed: u64,
    /// Consecutive correct votes that count as a settled response.
    pub confirm: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            windows: alloc::vec![1, 2, 3, 4, 6, 8, 10, 14, 20],
            voting: VotingParams::default(),
            noise_rate: 0.2,
            noise_peak: 0.9,
            noise_seed: 0,
            confirm: 2,
        }
    }
}

/// Classifier output over a run, with ground truth per decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSequence {
    pub ticks: Vec<u64>,
    pub truth: Vec<usize>,
    pub probs: Vec<ProbDist>,
    /// Ticks at which the ground truth changes.
    pub changes: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub window: usize,
    pub avg_response_delay_ticks: f64,
    pub error_rate: f64,
    pub decisions: usize,
}

/// Classify every window of a static run of a phased scenario. A decision
/// at tick `T` sees the window ending at `T`.
pub fn classify_phased(
    model: &ForestModel,
    scenario: &Scenario,
    sim: &SimConfig,
    policy: PolicyId,
    portfolio: &Portfolio,
    label_of: impl Fn(&str) -> Result<String>,
) -> Result<DecisionSequence> {
    let run = run_with_portfolio(sim, scenario, &mut StaticController(policy), portfolio)?;
    let interval = sim.sample_interval_ticks;
    let mut seq = DecisionSequence {
        ticks: Vec::new(),
        truth: Vec::new(),
        probs: Vec::new(),
        changes: scenario.phases.iter().skip(1).map(|p| p.start_tick).collect(),
    };
    for fv in run_features(&run)? {
        let label = label_of(scenario.phase_at(fv.start_tick))?;
        let class = model.class_index(&label).ok_or(Error::UnmappedClass(label))?;
        let tick = fv.start_tick + interval;
        let mut p = predict_proba(model, &fv)?;
        p.timestamp_tick = tick;
        seq.ticks.push(tick);
        seq.truth.push(class);
        seq.probs.push(p);
    }
    Ok(seq)
}

/// Replace a random share of distributions with a confident wrong guess.
pub fn inject_noise(seq: &DecisionSequence, cfg: &SweepConfig) -> DecisionSequence {
    let mut out = seq.clone();
    let mut rng = stream(cfg.noise_seed, str_key("sweep-noise"));
    for (p, &truth) in out.probs.iter_mut().zip(&seq.truth) {
        let n = p.probs.len();
        let hit = rng.random::<f64>() < cfg.noise_rate;
        let wrong = (truth + 1 + rng.random_range(0..n.max(2) - 1)) % n;
        if hit && n > 1 {
            let rest = (1.0 - cfg.noise_peak) / (n - 1) as f64;
            p.probs = (0..n).map(|c| if c == wrong { cfg.noise_peak } else { rest }).collect();
        }
    }
    out
}

/// Vote over `seq` with each window length.
///
/// Error rate is the share of decisions whose vote differs from the ground
/// truth. Response delay is measured from each truth change to the first
/// decision that starts `confirm` consecutive correct votes (cut short by
/// the next change); a phase never answered counts up to its last decision.
pub fn sweep_sequence(seq: &DecisionSequence, cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.windows.is_empty() {
        return Err(Error::EmptySweep);
    }
    let n = seq.ticks.len();
    cfg.windows
        .iter()
        .map(|&w| {
            let params = VotingParams {
                window: w,
                ..cfg.voting.clone()
            };
            params.validate()?;
            let mut state = VotingState::new();
            let votes = seq
                .probs
                .iter()
                .map(|p| push_and_vote(&mut state, p.clone(), &params))
                .collect::<Result<Vec<_>>>()?;
            let wrong = votes.iter().zip(&seq.truth).filter(|(v, t)| v != t).count();
            let mut delays = Vec::new();
            for (c, &change) in seq.changes.iter().enumerate() {
                let end = seq.changes.get(c + 1).copied().unwrap_or(u64::MAX);
                let idx: Vec<usize> = (0..n).filter(|&i| seq.ticks[i] > change && seq.ticks[i] <= end).collect();
                let Some(&last) = idx.last() else { continue };
                let settled = idx.iter().position(|&i| {
                    let run = cfg.confirm.max(1);
                    (i..(i + run).min(last + 1)).all(|k| votes[k] == seq.truth[k])
                });
                let at = settled.map_or(seq.ticks[last], |j| seq.ticks[idx[j]]);
                delays.push((at - change) as f64);
            }
            Ok(SweepRow {
                window: w,
                avg_response_delay_ticks: if delays.is_empty() {
                    0.0
                } else {
                    delays.iter().sum::<f64>() / delays.len() as f64
                },
                error_rate: if n == 0 { 0.0 } else { wrong as f64 / n as f64 },
                decisions: n,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub records: usize,
    pub inference: LatencyStats,
    pub decision: LatencyStats,
    pub total: LatencyStats,
}

fn stats(mut v: Vec<f64>) -> LatencyStats {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.sort_by(f64::total_cmp);
    LatencyStats {
        mean,
        p90: nearest_rank(&v, 90.0),
        p95: nearest_rank(&v, 95.0),
        p99: nearest_rank(&v, 99.0),
    }
}

/// Milliseconds; total is inference plus decision per record.
pub fn latency_report(records: &[DecisionRecord]) -> Result<LatencyReport> {
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    let inf: Vec<f64> = records.iter().map(|r| r.inference_latency_ms).collect();
    let dec: Vec<f64> = records.iter().map(|r| r.decision_latency_ms).collect();
    let tot = inf.iter().zip(&dec).map(|(a, b)| a + b).collect();
    Ok(LatencyReport {
        records: records.len(),
        inference: stats(inf),
        decision: stats(dec),
        total: stats(tot),
    })
}

/// Heatmap cells, `(scenario, profile) -> improvement`.
pub fn improvement_grid(units: &[ComparisonUnit], baseline: PolicyId) -> Result<BTreeMap<(String, String), f64>> {
    units
        .iter()
        .map(|u| Ok(((u.scenario_id.to_string(), u.profile_id.clone()), improvement(u, baseline)?)))
        .collect()
}
