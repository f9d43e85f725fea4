//! Offline preparation and fast adaptation.
//!
//! Stage 1 runs every scenario under every policy on the prototype machines,
//! trains the classifier and derives a mapping from the score grid. Stage 2
//! repeats those runs with a shadow agent so switch stalls are charged, and
//! re-derives the mapping from the overhead-adjusted grid. Stage 3 runs the
//! agent for real on each prototype, fine-tunes the model on the live rows,
//! and settles each machine's mapping by replacement tests against the top
//! runners-up. Adaptation runs stage 3 alone on a new machine.
//!
//! The model is trained across machines; mapping tables are per machine.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::agent::{run_agent, AgentConfig, Clock, DecisionRecord, AgentMode, MappingTable, Provenance, ZeroClock, MAPPING_VERSION};
use crate::classify::{
    accuracy, canonical_sort, fine_tune_with, stratified_split, train_with, FineTuneParams, ForestModel,
    Hyperparams, LabeledRow,
};
use crate::digest::checksum;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::metrics::{run_features, score_series, ScoreSeries};
use crate::policies::{PolicyId, Portfolio};
use crate::sim::{run_with_portfolio, SimRun, StaticController};
use crate::uxscore::{calibrate, score_from_series, MetricScore, MetricSpec, ScenarioScore, ScoringConfig};
use crate::workloads::{
    build_scenario, catalog, descriptor, label_for, LabelMode, MachineProfile, WorkloadCatalog,
};

/// Mapping key for the machine-independent table of stages 1 and 2.
pub const GENERAL: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub label_mode: LabelMode,
    pub portfolio: Vec<PolicyId>,
    pub scenarios: Vec<String>,
    pub stage1_seeds: Vec<u64>,
    pub stage3_seed: u64,
    pub holdout_frac: f64,
    pub split_seed: u64,
    pub replacement_breadth: usize,
    /// Charge this instead of each machine's own switch overhead.
    pub switch_cost_override: Option<u64>,
    pub hyperparams: Hyperparams,
    pub fine_tune: FineTuneParams,
    pub scoring: ScoringConfig,
    pub agent: AgentConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            label_mode: LabelMode::Scenario,
            portfolio: PolicyId::ALL.to_vec(),
            scenarios: catalog().into_iter().map(|d| d.scenario_id).collect(),
            stage1_seeds: alloc::vec![1, 2, 3],
            stage3_seed: 7,
            holdout_frac: 0.2,
            split_seed: 42,
            replacement_breadth: 2,
            switch_cost_override: None,
            hyperparams: Hyperparams::default(),
            fine_tune: FineTuneParams::default(),
            scoring: ScoringConfig::default(),
            agent: AgentConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn portfolio(&self) -> Result<Portfolio> {
        Portfolio::try_from(self.portfolio.clone())
    }

    pub fn validate(&self) -> Result<()> {
        self.portfolio()?;
        if self.scenarios.is_empty() || self.stage1_seeds.is_empty() {
            return Err(Error::InvalidConfig("scenarios and stage1_seeds must be non-empty".into()));
        }
        for s in &self.scenarios {
            descriptor(s)?;
        }
        if !(0.0..1.0).contains(&self.holdout_frac) {
            return Err(Error::InvalidConfig("holdout_frac must lie in [0, 1)".into()));
        }
        self.agent.voting.validate()
    }

    pub fn label_of(&self, scenario_id: &str) -> Result<String> {
        let d = descriptor(scenario_id)?;
        Ok(label_for(self.label_mode, d.interactive_kind, d.background_kind))
    }

    /// Classes in sorted order, each with its scenarios.
    pub fn classes(&self) -> Result<BTreeMap<String, Vec<String>>> {
        let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for s in &self.scenarios {
            out.entry(self.label_of(s)?).or_default().push(s.clone());
        }
        Ok(out)
    }

    fn switch_cost(&self, profile: &MachineProfile) -> u64 {
        self.switch_cost_override.unwrap_or(profile.switch_overhead_ticks)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Prototype,
    OverheadCalibration,
    Generalization,
    Adaptation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCell {
    pub profile_id: String,
    pub scenario_id: String,
    pub label: String,
    pub policy: PolicyId,
    /// Mean over the cell's seeds.
    pub score: ScenarioScore,
    pub runs: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentScore {
    pub profile_id: String,
    pub scenario_id: String,
    pub overall: f64,
    pub real_switches: u32,
    pub final_policy: PolicyId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub profiles: Vec<String>,
    pub scenarios: Vec<String>,
    pub portfolio: Vec<PolicyId>,
    pub label_mode: LabelMode,
    pub dataset_ref: String,
    pub dataset_rows: usize,
    pub holdout_rows: usize,
    pub model_ref: String,
    pub mapping_refs: BTreeMap<String, String>,
    pub score_grid: Vec<ScoreCell>,
    /// Policies per class, best first, by mean score on the prototype grid.
    pub ranking: BTreeMap<String, Vec<PolicyId>>,
    /// Replacement-test candidates per machine and class.
    pub candidates: BTreeMap<String, BTreeMap<String, Vec<PolicyId>>>,
    pub agent_scores: Vec<AgentScore>,
    pub accuracy: f64,
    /// The incoming model's accuracy on this stage's holdout.
    pub previous_accuracy: Option<f64>,
    pub previous_ref: Option<String>,
}

/// Everything a stage produces; the next stage starts from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutput {
    pub report: StageReport,
    pub train: Vec<LabeledRow>,
    pub holdout: Vec<LabeledRow>,
    pub model: ForestModel,
    pub mappings: BTreeMap<String, MappingTable>,
}

impl StageOutput {
    pub fn dataset_checksum(&self) -> String {
        let mut all: Vec<LabeledRow> = self.train.iter().chain(&self.holdout).cloned().collect();
        canonical_sort(&mut all);
        checksum(&all)
    }

    pub fn mapping_for(&self, profile_id: &str) -> Result<&MappingTable> {
        self.mappings
            .get(profile_id)
            .or_else(|| self.mappings.get(GENERAL))
            .ok_or_else(|| Error::MissingArtifact(alloc::format!("mapping for {profile_id}")))
    }
}

/// What a machine gets from adaptation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adaptation {
    pub mapping: MappingTable,
    pub model: Option<ForestModel>,
    pub report: StageReport,
}

pub(crate) struct Outcome {
    pub(crate) rows: Vec<LabeledRow>,
    pub(crate) series: ScoreSeries,
    pub(crate) switch_ticks: Vec<u64>,
    pub(crate) policy_ticks: Vec<(PolicyId, u64)>,
    pub(crate) final_policy: PolicyId,
    pub(crate) decisions: Vec<DecisionRecord>,
}

impl Outcome {
    pub(crate) fn switches(&self) -> u32 {
        self.switch_ticks.len() as u32
    }
}

fn collect(run: &SimRun, label: &str, profile: &MachineProfile, policy: PolicyId, seed: u64) -> Result<Outcome> {
    let rows = run_features(run)?
        .into_iter()
        .enumerate()
        .map(|(w, fv)| LabeledRow {
            label: label.to_string(),
            profile_id: profile.profile_id.clone(),
            scenario_id: run.scenario_id.clone(),
            policy: policy.as_str().to_string(),
            seed,
            window: w as u32,
            values: fv.values,
        })
        .collect();
    let switch_ticks = run
        .trace
        .iter()
        .filter(|e| matches!(e.event, crate::sim::Event::PolicySwitch { shadow: false, .. }))
        .map(|e| e.tick)
        .collect();
    Ok(Outcome {
        rows,
        series: score_series(run),
        switch_ticks,
        policy_ticks: run.policy_ticks.clone(),
        final_policy: run.final_policy,
        decisions: Vec::new(),
    })
}

fn wrap(profile: &MachineProfile, scenario: &str, policy: &str, e: Error) -> Error {
    Error::RunFailed {
        profile: profile.profile_id.clone(),
        scenario: scenario.to_string(),
        policy: policy.to_string(),
        source: alloc::boxed::Box::new(e),
    }
}

/// One static run of `policy`, switch cost zero.
pub fn static_outcome(
    cfg: &PipelineConfig,
    cat: &WorkloadCatalog,
    profile: &MachineProfile,
    scenario_id: &str,
    seed: u64,
    policy: PolicyId,
) -> Result<(Vec<LabeledRow>, ScoreSeries)> {
    let o = static_run(cfg, cat, profile, scenario_id, seed, policy)?;
    Ok((o.rows, o.series))
}

pub(crate) fn static_run(
    cfg: &PipelineConfig,
    cat: &WorkloadCatalog,
    profile: &MachineProfile,
    scenario_id: &str,
    seed: u64,
    policy: PolicyId,
) -> Result<Outcome> {
    let go = || -> Result<Outcome> {
        let portfolio = cfg.portfolio()?;
        let sc = build_scenario(cat, scenario_id, profile, seed)?;
        let sim = profile.sim_config(seed);
        let run = run_with_portfolio(&sim, &sc, &mut StaticController(policy), &portfolio)?;
        collect(&run, &cfg.label_of(scenario_id)?, profile, policy, seed)
    };
    go().map_err(|e| wrap(profile, scenario_id, policy.as_str(), e))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn agent_outcome<C: Clock>(
    cfg: &PipelineConfig,
    cat: &WorkloadCatalog,
    profile: &MachineProfile,
    scenario_id: &str,
    seed: u64,
    agent: &AgentConfig,
    model: &ForestModel,
    mapping: &MappingTable,
    clock: C,
) -> Result<Outcome> {
    let go = || -> Result<Outcome> {
        let portfolio = cfg.portfolio()?;
        let sc = build_scenario(cat, scenario_id, profile, seed)?;
        let mut sim = profile.sim_config(seed);
        sim.switch_cost_ticks = cfg.switch_cost(profile);
        let run = run_agent(agent, &sim, &sc, model, mapping, &portfolio, clock)?;
        let mut o = collect(&run.run, &cfg.label_of(scenario_id)?, profile, agent.initial_policy, seed)?;
        o.decisions = run.decisions;
        Ok(o)
    };
    go().map_err(|e| wrap(profile, scenario_id, "agent", e))
}

fn mean_score(scores: &[ScenarioScore]) -> ScenarioScore {
    let n = scores.len() as f64;
    let first = &scores[0];
    let per_metric = (0..first.per_metric.len())
        .map(|i| {
            let avg = |f: fn(&MetricScore) -> f64| scores.iter().map(|s| f(&s.per_metric[i])).sum::<f64>() / n;
            MetricScore {
                metric_name: first.per_metric[i].metric_name.clone(),
                mean: avg(|m| m.mean),
                stability: avg(|m| m.stability),
                value: avg(|m| m.value),
                fused: avg(|m| m.fused),
                weight: first.per_metric[i].weight,
            }
        })
        .collect();
    ScenarioScore {
        overall: scores.iter().map(|s| s.overall).sum::<f64>() / n,
        per_metric,
    }
}

/// Calibrate on every run of one (machine, scenario) and score them.
fn unit_specs(scoring: &ScoringConfig, series: &[&ScoreSeries]) -> Result<Vec<MetricSpec>> {
    calibrate(series, scoring)
}

struct Job {
    profile: usize,
    scenario: usize,
    seed: u64,
    policy: PolicyId,
}

/// Grid cells from outcomes of `jobs`, grouped by (machine, scenario) for
/// calibration and averaged over seeds per policy.
fn build_grid(
    cfg: &PipelineConfig,
    profiles: &[MachineProfile],
    jobs: &[Job],
    outcomes: &[Outcome],
) -> Result<(Vec<ScoreCell>, BTreeMap<(usize, usize), Vec<MetricSpec>>)> {
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, j) in jobs.iter().enumerate() {
        groups.entry((j.profile, j.scenario)).or_default().push(i);
    }
    let mut cells = Vec::new();
    let mut specs_out = BTreeMap::new();
    for ((p, s), idx) in groups {
        let refs: Vec<&ScoreSeries> = idx.iter().map(|&i| &outcomes[i].series).collect();
        let specs = unit_specs(&cfg.scoring, &refs)?;
        for &policy in &cfg.portfolio {
            let scores = idx
                .iter()
                .filter(|&&i| jobs[i].policy == policy)
                .map(|&i| score_from_series(&outcomes[i].series, &specs))
                .collect::<Result<Vec<_>>>()?;
            if scores.is_empty() {
                continue;
            }
            cells.push(ScoreCell {
                profile_id: profiles[p].profile_id.clone(),
                scenario_id: cfg.scenarios[s].clone(),
                label: cfg.label_of(&cfg.scenarios[s])?,
                policy,
                runs: scores.len() as u32,
                score: mean_score(&scores),
            });
        }
        specs_out.insert((p, s), specs);
    }
    Ok((cells, specs_out))
}

/// Mean overall score per class and policy over the cells of `profiles`.
fn class_means(
    grid: &[ScoreCell],
    profiles: &[&str],
) -> BTreeMap<String, BTreeMap<PolicyId, f64>> {
    let mut acc: BTreeMap<String, BTreeMap<PolicyId, (f64, u32)>> = BTreeMap::new();
    for c in grid.iter().filter(|c| profiles.contains(&c.profile_id.as_str())) {
        let e = acc.entry(c.label.clone()).or_default().entry(c.policy).or_insert((0.0, 0));
        e.0 += c.score.overall;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, m)| (k, m.into_iter().map(|(p, (s, n))| (p, s / n as f64)).collect()))
        .collect()
}

/// Policies of `candidates` ordered best first; ties keep portfolio order.
fn rank(means: &BTreeMap<PolicyId, f64>, candidates: &[PolicyId]) -> Vec<PolicyId> {
    let mut v: Vec<(usize, PolicyId, f64)> = candidates
        .iter()
        .enumerate()
        .filter_map(|(i, p)| means.get(p).map(|&s| (i, *p, s)))
        .collect();
    v.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(_, p, _)| p).collect()
}

/// Ranking of the full portfolio per class.
pub fn rank_grid(grid: &[ScoreCell], profiles: &[&str], portfolio: &[PolicyId]) -> BTreeMap<String, Vec<PolicyId>> {
    class_means(grid, profiles)
        .into_iter()
        .map(|(k, m)| (k, rank(&m, portfolio)))
        .collect()
}

/// Argmax per class over `candidates` (the whole portfolio when absent),
/// ties to the policy registered first.
pub fn derive_entries(
    grid: &[ScoreCell],
    profiles: &[&str],
    portfolio: &[PolicyId],
    candidates: Option<&BTreeMap<String, Vec<PolicyId>>>,
) -> Result<BTreeMap<String, PolicyId>> {
    class_means(grid, profiles)
        .into_iter()
        .map(|(class, means)| {
            let pool: Vec<PolicyId> = match candidates {
                Some(c) => {
                    let set = c.get(&class).ok_or_else(|| Error::UnmappedClass(class.clone()))?;
                    portfolio.iter().copied().filter(|p| set.contains(p)).collect()
                }
                None => portfolio.to_vec(),
            };
            let best = rank(&means, &pool)
                .first()
                .copied()
                .ok_or_else(|| Error::UnmappedClass(class.clone()))?;
            Ok((class, best))
        })
        .collect()
}

fn table(stage: Stage, profile_id: &str, entries: BTreeMap<String, PolicyId>, dataset: &str, grid: &[ScoreCell]) -> MappingTable {
    MappingTable {
        version: MAPPING_VERSION,
        entries,
        provenance: Provenance {
            stage: stage_name(stage).into(),
            profile_id: profile_id.into(),
            dataset_checksum: dataset.into(),
            score_table_checksum: checksum(grid),
        },
    }
}

pub fn stage_name(stage: Stage) -> &'static str {
    match stage {
        Stage::Prototype => "prototype",
        Stage::OverheadCalibration => "overhead_calibration",
        Stage::Generalization => "generalization",
        Stage::Adaptation => "adaptation",
    }
}

fn all_rows(outcomes: &[Outcome]) -> Vec<LabeledRow> {
    outcomes.iter().flat_map(|o| o.rows.iter().cloned()).collect()
}

fn merged(a: &[LabeledRow], b: Vec<LabeledRow>) -> Vec<LabeledRow> {
    let mut v = a.to_vec();
    v.extend(b);
    canonical_sort(&mut v);
    v
}

fn check_profiles(profiles: &[MachineProfile]) -> Result<()> {
    if profiles.is_empty() {
        return Err(Error::InvalidConfig("at least one machine profile is required".into()));
    }
    for p in profiles {
        p.validate()?;
    }
    Ok(())
}

fn grid_jobs(cfg: &PipelineConfig, n_profiles: usize, seeds: &[u64]) -> Vec<Job> {
    let mut jobs = Vec::new();
    for p in 0..n_profiles {
        for s in 0..cfg.scenarios.len() {
            for &seed in seeds {
                for &policy in &cfg.portfolio {
                    jobs.push(Job {
                        profile: p,
                        scenario: s,
                        seed,
                        policy,
                    });
                }
            }
        }
    }
    jobs
}

fn ids(profiles: &[MachineProfile]) -> Vec<&str> {
    profiles.iter().map(|p| p.profile_id.as_str()).collect()
}

pub fn stage1_prototype<E: Executor>(
    cfg: &PipelineConfig,
    cat: &WorkloadCatalog,
    profiles: &[MachineProfile],
    exec: &E,
) -> Result<StageOutput> {
    cfg.validate()?;
    check_profiles(profiles)?;
    let jobs = grid_jobs(cfg, profiles.len(), &cfg.stage1_seeds);
    let outcomes = exec
        .run_all(jobs.len(), |i| {
            let j = &jobs[i];
            static_run(cfg, cat, &profiles[j.profile], &cfg.scenarios[j.scenario], j.seed, j.policy)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (grid, _) = build_grid(cfg, profiles, &jobs, &outcomes)?;

    let (train, holdout) = stratified_split(&all_rows(&outcomes), cfg.holdout_frac, cfg.split_seed);
    let model = train_with(&train, &cfg.hyperparams, exec)?;
    let acc = accuracy(&model, &holdout);

    let pids = ids(profiles);
    let entries = derive_entries(&grid, &pids, &cfg.portfolio, None)?;
    let ranking = rank_grid(&grid, &pids, &cfg.portfolio);
    finish(
        Stage::Prototype,
        cfg,
        profiles,
        train,
        holdout,
        model,
        [(GENERAL.to_string(), entries)].into_iter().collect(),
        grid,
        ranking,
        BTreeMap::new(),
        Vec::new(),
        acc,
        None,
        None,
    )
}

#[allow(clippy::too_many_arguments)]
fn finish(
    stage: Stage,
    cfg: &PipelineConfig,
    profiles: &[MachineProfile],
    train: Vec<LabeledRow>,
    holdout: Vec<LabeledRow>,
    model: ForestModel,
    entries: BTreeMap<String, BTreeMap<String, PolicyId>>,
    grid: Vec<ScoreCell>,
    ranking: BTreeMap<String, Vec<PolicyId>>,
    candidates: BTreeMap<String, BTreeMap<String, Vec<PolicyId>>>,
    agent_scores: Vec<AgentScore>,
    accuracy: f64,
    previous_accuracy: Option<f64>,
    previous_ref: Option<String>,
) -> Result<StageOutput> {
    let mut out = StageOutput {
        report: StageReport {
            stage,
            profiles: profiles.iter().map(|p| p.profile_id.clone()).collect(),
            scenarios: cfg.scenarios.clone(),
            portfolio: cfg.portfolio.clone(),
            label_mode: cfg.label_mode,
            dataset_ref: String::new(),
            dataset_rows: train.len() + holdout.len(),
            holdout_rows: holdout.len(),
            model_ref: model.checksum(),
            mapping_refs: BTreeMap::new(),
            score_grid: Vec::new(),
            ranking,
            candidates,
            agent_scores,
            accuracy,
            previous_accuracy,
            previous_ref,
        },
        train,
        holdout,
        model,
        mappings: BTreeMap::new(),
    };
    let dataset = out.dataset_checksum();
    for (key, e) in entries {
        let t = table(stage, &key, e, &dataset, &grid);
        t.validate(&out.model.label_set, &cfg.portfolio()?)?;
        out.report.mapping_refs.insert(key.clone(), checksum(&t));
        out.mappings.insert(key, t);
    }
    out.report.dataset_ref = dataset;
    out.report.score_grid = grid;
    Ok(out)
}

pub fn stage2_overhead<E: Executor>(
    cfg: &PipelineConfig,
    cat: &WorkloadCatalog,
    prev: &StageOutput,
    profiles: &[MachineProfile],
    exec: &E,
) -> Result<StageOutput> {
    cfg.validate()?;
    check_profiles(profiles)?;
    let general = prev.mapping_for(GENERAL)?;
    let jobs = grid_jobs(cfg, profiles.len(), &cfg.stage1_seeds);
    // Each policy is run as if the mapping sent its scenario's class to it,
    // with a shadow agent charging a stall whenever the live classification
    // would move it elsewhere.
    let outcomes = exec
        .run_all(jobs.len(), |i| {
            let j = &jobs[i];
            let scenario = &cfg.scenarios[j.scenario];
            let mut mapping = general.clone();
            mapping.entries.insert(cfg.label_of(scenario)?, j.policy);
            let agent = AgentConfig {
                mode: AgentMode::Shadow,
                initial_policy: j.policy,
                ..cfg.agent.clone()
            };
            let mut o = agent_outcome(cfg, cat, &profiles[j.profile], scenario, j.seed, &agent, &prev.model, &mapping, ZeroClock)?;
            for r in &mut o.rows {
                r.policy = alloc::format!("shadow:{}", j.policy.as_str());
            }
            Ok(o)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (grid, _) = build_grid(cfg, profiles, &jobs, &outcomes)?;

    let (new_train, new_holdout) = stratified_split(&all_rows(&outcomes), cfg.holdout_frac, cfg.split_seed ^ 2);
    let holdout = merged(&prev.holdout, new_holdout);
    let model = fine_tune_with(&prev.model, &new_train, &cfg.fine_tune, exec)?;
    let before = accuracy(&prev.model, &holdout);
    let acc = accuracy(&model, &holdout);
    let train = merged(&prev.train, new_train);

    let pids = ids(profiles);
    let entries = derive_entries(&grid, &pids, &cfg.portfolio, None)?;
    let ranking = rank_grid(&grid, &pids, &cfg.portfolio);
    finish(
        Stage::OverheadCalibration,
        cfg,
        profiles,
        train,
        holdout,
        model,
        [(GENERAL.to_string(), entries)].into_iter().collect(),
        grid,
        ranking,
        BTreeMap::new(),
        Vec::new(),
        acc,
        Some(before),
        Some(checksum(&prev.report)),
    )
}

/// Replacement-test candidates: the incumbent plus the best
/// `breadth` others from the prototype ranking.
fn candidates_for(
    cfg: &PipelineConfig,
    general: &MappingTable,
    ranking: &BTreeMap<String, Vec<PolicyId>>,
) -> Result<BTreeMap<String, Vec<PolicyId>>> {
    cfg.classes()?
        .into_keys()
        .map(|class| {
            let incumbent = general.get(&class)?;
            let mut v = alloc::vec![incumbent];
            if let Some(r) = ranking.get(&class) {
                v.extend(r.iter().copied().filter(|&p| p != incumbent).take(cfg.replacement_breadth));
            }
            Ok((class, v))
        })
        .collect()
}

struct MachinePass {
    grid: Vec<ScoreCell>,
    candidates: BTreeMap<String, Vec<PolicyId>>,
    entries: BTreeMap<String, PolicyId>,
    live_rows: Vec<LabeledRow>,
    agent_scores: Vec<AgentScore>,
}

/// The per-machine part of stage 3: full static grid at the stage-3 seed,
/// replacement tests among the candidates, and a real agent run per
/// scenario. The agent runs are scored with the static grid's calibration
/// and do not feed the mapping.
fn machine_pass<E: Executor>(
    cfg: &PipelineConfig,
    cat: &WorkloadCatalog,
    profiles: &[MachineProfile],
    general: &MappingTable,
    ranking: &BTreeMap<String, Vec<PolicyId>>,
    model: &ForestModel,
    exec: &E,
) -> Result<Vec<MachinePass>> {
    let seeds = [cfg.stage3_seed];
    let jobs = grid_jobs(cfg, profiles.len(), &seeds);
    let n_agent = profiles.len() * cfg.scenarios.len();
    let agent_cfg = AgentConfig {
        mode: AgentMode::Real,
        ..cfg.agent.clone()
    };
    let mut outcomes = exec
        .run_all(jobs.len() + n_agent, |i| {
            if i < jobs.len() {
                let j = &jobs[i];
                static_run(cfg, cat, &profiles[j.profile], &cfg.scenarios[j.scenario], j.seed, j.policy)
            } else {
                let k = i - jobs.len();
                let (p, s) = (k / cfg.scenarios.len(), k % cfg.scenarios.len());
                agent_outcome(cfg, cat, &profiles[p], &cfg.scenarios[s], cfg.stage3_seed, &agent_cfg, model, general, ZeroClock)
            }
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let agent_outcomes = outcomes.split_off(jobs.len());
    let (grid, specs) = build_grid(cfg, profiles, &jobs, &outcomes)?;
    let candidates = candidates_for(cfg, general, ranking)?;

    let mut passes = Vec::with_capacity(profiles.len());
    for (p, prof) in profiles.iter().enumerate() {
        let cells: Vec<ScoreCell> = grid.iter().filter(|c| c.profile_id == prof.profile_id).cloned().collect();
        let entries = derive_entries(&cells, &[prof.profile_id.as_str()], &cfg.portfolio, Some(&candidates))?;
        let mut live_rows = Vec::new();
        let mut agent_scores = Vec::new();
        for s in 0..cfg.scenarios.len() {
            let o = &agent_outcomes[p * cfg.scenarios.len() + s];
            live_rows.extend(o.rows.iter().cloned().map(|mut r| {
                r.policy = "agent".into();
                r
            }));
            agent_scores.push(AgentScore {
                profile_id: prof.profile_id.clone(),
                scenario_id: cfg.scenarios[s].clone(),
                overall: score_from_series(&o.series, &specs[&(p, s)])?.overall,
                real_switches: o.switches(),
                final_policy: o.final_policy,
            });
        }
        passes.push(MachinePass {
            grid: cells,
            candidates: candidates.clone(),
            entries,
            live_rows,
            agent_scores,
        });
    }
    Ok(passes)
}

pub fn stage3_generalization<E: Executor>(
    cfg: &PipelineConfig,
    cat: &WorkloadCatalog,
    prev: &StageOutput,
    profiles: &[MachineProfile],
    exec: &E,
) -> Result<StageOutput> {
    cfg.validate()?;
    check_profiles(profiles)?;
    let general = prev.mapping_for(GENERAL)?.clone();
    let passes = machine_pass(cfg, cat, profiles, &general, &prev.report.ranking, &prev.model, exec)?;

    let mut grid = Vec::new();
    let mut candidates = BTreeMap::new();
    let mut entries = BTreeMap::new();
    let mut live = Vec::new();
    let mut agent_scores = Vec::new();
    for (prof, pass) in profiles.iter().zip(passes) {
        grid.extend(pass.grid);
        candidates.insert(prof.profile_id.clone(), pass.candidates);
        entries.insert(prof.profile_id.clone(), pass.entries);
        live.extend(pass.live_rows);
        agent_scores.extend(pass.agent_scores);
    }
    entries.insert(GENERAL.to_string(), general.entries.clone());

    let (new_train, new_holdout) = stratified_split(&live, cfg.holdout_frac, cfg.split_seed ^ 3);
    let model = fine_tune_with(&prev.model, &new_train, &cfg.fine_tune, exec)?;
    let before = accuracy(&prev.model, &new_holdout);
    let acc = accuracy(&model, &new_holdout);
    let train = merged(&prev.train, new_train);
    let holdout = merged(&prev.holdout, new_holdout);

    finish(
        Stage::Generalization,
        cfg,
        profiles,
        train,
        holdout,
        model,
        entries,
        grid,
        prev.report.ranking.clone(),
        candidates,
        agent_scores,
        acc,
        Some(before),
        Some(checksum(&prev.report)),
    )
}

/// Stage 3 alone on `profile`, starting from the general mapping and the
/// prototype ranking carried by `final_out`.
pub fn adapt_new_machine<E: Executor>(
    cfg: &PipelineConfig,
    cat: &WorkloadCatalog,
    final_out: &StageOutput,
    profile: &MachineProfile,
    fine_tune: bool,
    exec: &E,
) -> Result<Adaptation> {
    cfg.validate()?;
    profile.validate()?;
    let general = final_out.mapping_for(GENERAL)?;
    let passes = machine_pass(
        cfg,
        cat,
        core::slice::from_ref(profile),
        general,
        &final_out.report.ranking,
        &final_out.model,
        exec,
    )?;
    let pass = passes.into_iter().next().ok_or(Error::NoRecords)?;
    let (tr, holdout) = stratified_split(&pass.live_rows, cfg.holdout_frac, cfg.split_seed ^ 4);
    let model = if fine_tune {
        Some(fine_tune_with(&final_out.model, &tr, &cfg.fine_tune, exec)?)
    } else {
        None
    };
    let before = accuracy(&final_out.model, &holdout);
    let acc = accuracy(model.as_ref().unwrap_or(&final_out.model), &holdout);
    let mut dataset_rows = pass.live_rows.clone();
    canonical_sort(&mut dataset_rows);
    let dataset = checksum(&dataset_rows);
    let mapping = table(Stage::Adaptation, &profile.profile_id, pass.entries, &dataset, &pass.grid);
    mapping.validate(&final_out.model.label_set, &cfg.portfolio()?)?;
    let report = StageReport {
        stage: Stage::Adaptation,
        profiles: alloc::vec![profile.profile_id.clone()],
        scenarios: cfg.scenarios.clone(),
        portfolio: cfg.portfolio.clone(),
        label_mode: cfg.label_mode,
        dataset_ref: dataset,
        dataset_rows: dataset_rows.len(),
        holdout_rows: holdout.len(),
        model_ref: model.as_ref().unwrap_or(&final_out.model).checksum(),
        mapping_refs: [(profile.profile_id.clone(), checksum(&mapping))].into_iter().collect(),
        score_grid: pass.grid,
        ranking: final_out.report.ranking.clone(),
        candidates: [(profile.profile_id.clone(), pass.candidates)].into_iter().collect(),
        agent_scores: pass.agent_scores,
        accuracy: acc,
        previous_accuracy: Some(before),
        previous_ref: Some(checksum(&final_out.report)),
    };
    Ok(Adaptation { mapping, model, report })
}

/// Re-derive every stored mapping from the stored grid and compare.
pub fn mapping_consistent(out: &StageOutput) -> Result<bool> {
    let r = &out.report;
    for (key, t) in &out.mappings {
        let expect = if key == GENERAL {
            if r.stage == Stage::Generalization {
                continue;
            }
            let pids: Vec<&str> = r.profiles.iter().map(String::as_str).collect();
            derive_entries(&r.score_grid, &pids, &r.portfolio, None)?
        } else {
            derive_entries(&r.score_grid, &[key.as_str()], &r.portfolio, r.candidates.get(key))?
        };
        if expect != t.entries {
            return Ok(false);
        }
    }
    Ok(true)
}
