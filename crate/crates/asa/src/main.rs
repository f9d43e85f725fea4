use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use asa::artifacts::{adapt_dir, deployments, load_stage, save_adaptation, save_stage, stage_dir};
use asa::config::Config;
use asa::files::{read_json, read_ndjson, write_json, write_ndjson, write_text};
use asa::report::{emit_report, latency_markdown, read_units_csv, sweep_csv, Format};
use asa::runtime::{Parallel, WallClock};
use asa_core::agent::DecisionRecord;
use asa_core::eval::{classify_phased, evaluate, inject_noise, latency_report, summarize, sweep_sequence, EvalSummary};
use asa_core::pipeline::{adapt_new_machine, stage1_prototype, stage2_overhead, stage3_generalization};
use asa_core::sim::{run_with_portfolio, StaticController};
use asa_core::workloads::{build_phased, build_scenario, find_profile};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "asa", version, about = "Adaptive scheduling agent: simulator, offline pipeline and evaluation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    config: PathBuf,
    /// Override a configuration value, e.g. `--set eval.repeats=1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<Config> {
        let cfg = Config::load(&self.config, &self.overrides)
            .with_context(|| format!("loading {}", self.config.display()))?;
        if cfg.threads > 0 {
            rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global().ok();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Single simulation runs.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Offline preparation stages.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
    /// Evaluation against static policies.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Reports from stored evaluation results.
    #[command(subcommand)]
    Report(ReportCmd),
    /// Built-in workload catalog and machine profiles.
    #[command(subcommand)]
    Catalog(CatalogCmd),
}

#[derive(Subcommand)]
enum SimCmd {
    /// Run `[sim]` from the config and write its trace as NDJSON.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "trace.ndjson")]
        trace: PathBuf,
    },
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// Static grid on the prototypes, initial model and mapping.
    Stage1(Common),
    /// Shadow-mode overhead calibration.
    Stage2(Common),
    /// Live runs, fine-tuning and per-machine replacement tests.
    Stage3(Common),
    /// Adapt to new machines (default: the configured targets).
    Adapt {
        #[command(flatten)]
        common: Common,
        #[arg(long = "profile")]
        profiles: Vec<String>,
    },
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Agent against every static policy on the target machines.
    Run(Common),
    /// Error rate and response delay per voting window length.
    SweepWindow(Common),
    /// Latency statistics over the decisions of the last `eval run`.
    Latency(Common),
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Recompute the summary from the unit table and write reports.
    Emit {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "json,csv,markdown")]
        format: Vec<Format>,
    },
}

#[derive(Subcommand)]
enum CatalogCmd {
    /// Write the built-in catalog and profiles as TOML.
    Dump {
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn eval_dir(out: &Path) -> PathBuf {
    out.join("eval")
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Sim(SimCmd::Run { common, trace }) => {
            let cfg = common.load()?;
            let cat = cfg.catalog()?;
            let all = cfg.all_profiles()?;
            let prof = find_profile(&all, &cfg.sim.profile)?;
            let sc = build_scenario(&cat, &cfg.sim.scenario, prof, cfg.sim.seed)?;
            let run = run_with_portfolio(
                &prof.sim_config(cfg.sim.seed),
                &sc,
                &mut StaticController(cfg.sim.policy),
                &cfg.pipeline.portfolio()?,
            )?;
            write_ndjson(&trace, &run.trace)?;
            println!(
                "{} events over {} ticks, busy {} idle {} stall {}; trace in {}",
                run.trace.len(),
                run.horizon_ticks,
                run.totals.busy,
                run.totals.idle,
                run.totals.stall,
                trace.display()
            );
        }
        Cmd::Pipeline(p) => pipeline(p)?,
        Cmd::Eval(EvalCmd::Run(common)) => {
            let cfg = common.load()?;
            let s3 = load_stage(&stage_dir(&cfg.out_dir, 3)).context("stage 3 artifacts")?;
            let profiles = cfg.select(&cfg.targets)?;
            let deps = deployments(&cfg.out_dir, &s3, &cfg.targets)?;
            let out = evaluate(&cfg.pipeline, &cfg.eval, &cfg.catalog()?, &profiles, &deps, WallClock::default(), &Parallel)?;
            let dir = eval_dir(&cfg.out_dir);
            write_json(&dir.join("summary.json"), &out.summary)?;
            write_text(&dir.join("units.csv"), &asa::report::units_csv(&out.units))?;
            write_ndjson(&dir.join("decisions.ndjson"), &out.decisions)?;
            let s = &out.summary;
            println!(
                "{} units: win {:.3} loss {:.3} tie {:.3}, top-1 {:.3}, top-3 {:.3}, mean improvement {:+.4}",
                s.units,
                s.win_rate,
                s.loss_rate,
                s.tie_rate,
                s.topk_rates.get(&1).copied().unwrap_or(0.0),
                s.topk_rates.get(&3).copied().unwrap_or(1.0),
                s.mean_improvement
            );
        }
        Cmd::Eval(EvalCmd::SweepWindow(common)) => {
            let cfg = common.load()?;
            let s3 = load_stage(&stage_dir(&cfg.out_dir, 3)).context("stage 3 artifacts")?;
            let cat = cfg.catalog()?;
            let all = cfg.all_profiles()?;
            let f = &cfg.fixture;
            let prof = find_profile(&all, &f.profile)?;
            let phases: Vec<(&str, u64)> = f.phases.iter().map(|p| (p.as_str(), f.phase_ticks)).collect();
            let sc = build_phased(&cat, "phased", &phases, prof, f.seed)?;
            let seq = classify_phased(&s3.model, &sc, &prof.sim_config(f.seed), f.policy, &cfg.pipeline.portfolio()?, |s| {
                cfg.pipeline.label_of(s)
            })?;
            let rows = sweep_sequence(&inject_noise(&seq, &cfg.sweep), &cfg.sweep)?;
            let path = cfg.out_dir.join("sweep.csv");
            write_text(&path, &sweep_csv(&rows))?;
            print!("{}", sweep_csv(&rows));
        }
        Cmd::Eval(EvalCmd::Latency(common)) => {
            let cfg = common.load()?;
            let dir = eval_dir(&cfg.out_dir);
            let records: Vec<DecisionRecord> = read_ndjson(&dir.join("decisions.ndjson"))?;
            let r = latency_report(&records)?;
            write_json(&dir.join("latency.json"), &r)?;
            write_text(&dir.join("latency.md"), &latency_markdown(&r))?;
            print!("{}", latency_markdown(&r));
        }
        Cmd::Report(ReportCmd::Emit { common, format }) => {
            let cfg = common.load()?;
            let dir = eval_dir(&cfg.out_dir);
            let units = read_units_csv(&dir.join("units.csv"))?;
            let summary = summarize(&units, &cfg.eval)?;
            let stored = dir.join("summary.json");
            if stored.exists() {
                let old: EvalSummary = read_json(&stored)?;
                if old != summary {
                    bail!("summary recomputed from units.csv differs from {}", stored.display());
                }
            }
            for p in emit_report(&dir, &summary, &units, &format)? {
                println!("{}", p.display());
            }
        }
        Cmd::Catalog(CatalogCmd::Dump { out }) => asa::catalog::dump_defaults(&out)?,
    }
    Ok(())
}

fn pipeline(cmd: PipelineCmd) -> Result<()> {
    match cmd {
        PipelineCmd::Stage1(common) => {
            let cfg = common.load()?;
            let out = stage1_prototype(&cfg.pipeline, &cfg.catalog()?, &cfg.select(&cfg.prototypes)?, &Parallel)?;
            save_stage(&stage_dir(&cfg.out_dir, 1), &out)?;
            report_stage(&out.report);
        }
        PipelineCmd::Stage2(common) => {
            let cfg = common.load()?;
            let prev = load_stage(&stage_dir(&cfg.out_dir, 1)).context("stage 1 artifacts")?;
            let out = stage2_overhead(&cfg.pipeline, &cfg.catalog()?, &prev, &cfg.select(&cfg.prototypes)?, &Parallel)?;
            save_stage(&stage_dir(&cfg.out_dir, 2), &out)?;
            report_stage(&out.report);
        }
        PipelineCmd::Stage3(common) => {
            let cfg = common.load()?;
            let prev = load_stage(&stage_dir(&cfg.out_dir, 2)).context("stage 2 artifacts")?;
            let out = stage3_generalization(&cfg.pipeline, &cfg.catalog()?, &prev, &cfg.select(&cfg.prototypes)?, &Parallel)?;
            save_stage(&stage_dir(&cfg.out_dir, 3), &out)?;
            report_stage(&out.report);
        }
        PipelineCmd::Adapt { common, profiles } => {
            let cfg = common.load()?;
            let s3 = load_stage(&stage_dir(&cfg.out_dir, 3)).context("stage 3 artifacts")?;
            let ids = if profiles.is_empty() { cfg.targets.clone() } else { profiles };
            let cat = cfg.catalog()?;
            for prof in cfg.select(&ids)? {
                let a = adapt_new_machine(&cfg.pipeline, &cat, &s3, &prof, cfg.adapt_fine_tune, &Parallel)?;
                save_adaptation(&adapt_dir(&cfg.out_dir, &prof.profile_id), &a)?;
                println!(
                    "{}: accuracy {:.4} (before {:.4}), mapping {}",
                    prof.profile_id,
                    a.report.accuracy,
                    a.report.previous_accuracy.unwrap_or(f64::NAN),
                    a.report.mapping_refs.values().next().map_or("", String::as_str)
                );
            }
        }
    }
    Ok(())
}

fn report_stage(r: &asa_core::pipeline::StageReport) {
    println!(
        "{:?}: {} rows ({} holdout), accuracy {:.4}, model {}",
        r.stage, r.dataset_rows, r.holdout_rows, r.accuracy, r.model_ref
    );
    for (k, v) in &r.mapping_refs {
        println!("  mapping {k}: {v}");
    }
}
