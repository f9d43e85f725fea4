//! Report emission: summaries as JSON, CSV or Markdown, the unit table,
//! and plot-ready CSVs (heatmap, window sweep).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use asa_core::eval::{improvement_grid, ComparisonUnit, EvalSummary, LatencyReport, SweepRow};
use asa_core::policies::PolicyId;

use crate::error::{io, Error, Result};
use crate::files::{write_json, write_text};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

const UNIT_HEADER: [&str; 6] = [
    "scenario_id",
    "profile_id",
    "asa_score",
    "asa_policy",
    "real_switches",
    "cooldown_violations",
];

/// Unit table, one column per policy after the fixed ones.
pub fn units_csv(units: &[ComparisonUnit]) -> String {
    let policies: Vec<PolicyId> = units.first().map(|u| u.per_policy_scores.keys().copied().collect()).unwrap_or_default();
    let mut s = UNIT_HEADER.join(",");
    for p in &policies {
        write!(s, ",{p}").unwrap();
    }
    s.push('\n');
    for u in units {
        write!(
            s,
            "{},{},{},{},{},{}",
            u.scenario_id, u.profile_id, u.asa_score, u.asa_policy, u.real_switches, u.cooldown_violations
        )
        .unwrap();
        for p in &policies {
            write!(s, ",{}", u.per_policy_scores[p]).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn read_units_csv(path: &Path) -> Result<Vec<ComparisonUnit>> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    let bad = |line: usize, reason: String| Error::Format {
        path: path.into(),
        line,
        reason,
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad(1, "empty file".into()))?.split(',').collect();
    if header.len() < UNIT_HEADER.len() || header[..UNIT_HEADER.len()] != UNIT_HEADER {
        return Err(bad(1, "unexpected unit table header".into()));
    }
    let policies = header[UNIT_HEADER.len()..]
        .iter()
        .map(|p| PolicyId::from_str(p).map_err(|e| bad(1, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let ln = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != header.len() {
            return Err(bad(ln, format!("expected {} fields, found {}", header.len(), f.len())));
        }
        let num = |j: usize| f[j].parse::<f64>().map_err(|e| bad(ln, format!("{}: {e}", header[j])));
        let int = |j: usize| f[j].parse::<u32>().map_err(|e| bad(ln, format!("{}: {e}", header[j])));
        let mut scores = BTreeMap::new();
        for (k, p) in policies.iter().enumerate() {
            scores.insert(*p, num(UNIT_HEADER.len() + k)?);
        }
        out.push(ComparisonUnit {
            scenario_id: f[0].to_string(),
            profile_id: f[1].to_string(),
            asa_score: num(2)?,
            asa_policy: PolicyId::from_str(f[3]).map_err(|e| bad(ln, e.to_string()))?,
            real_switches: int(4)?,
            cooldown_violations: int(5)?,
            per_policy_scores: scores,
        });
    }
    Ok(out)
}

/// Flat `metric,value` listing of a summary.
pub fn summary_rows(s: &EvalSummary) -> Vec<(String, f64)> {
    let mut v = vec![
        ("units".to_string(), s.units as f64),
        ("win_rate".into(), s.win_rate),
        ("loss_rate".into(), s.loss_rate),
        ("tie_rate".into(), s.tie_rate),
        ("mean_improvement".into(), s.mean_improvement),
        ("improvement_ci_lo".into(), s.improvement_ci.lo),
        ("improvement_ci_hi".into(), s.improvement_ci.hi),
        ("static_oracle_gap".into(), s.static_oracle_gap),
        ("above_oracle_units".into(), s.above_oracle.len() as f64),
        ("real_switches".into(), f64::from(s.real_switches)),
        ("cooldown_violations".into(), f64::from(s.cooldown_violations)),
    ];
    v.extend(s.topk_rates.iter().map(|(k, r)| (format!("top{k}_rate"), *r)));
    v.extend(s.per_profile_geomean.iter().map(|(p, g)| (format!("geomean_improvement:{p}"), *g)));
    v
}

pub fn summary_csv(s: &EvalSummary) -> String {
    let mut out = String::from("metric,value\n");
    for (k, v) in summary_rows(s) {
        writeln!(out, "{k},{v}").unwrap();
    }
    out
}

fn pct(x: f64) -> String {
    format!("{:.2}%", x * 100.0)
}

pub fn summary_markdown(s: &EvalSummary) -> String {
    let mut m = String::new();
    writeln!(m, "# Evaluation summary\n").unwrap();
    writeln!(m, "Baseline: `{}`, {} comparison units.\n", s.baseline, s.units).unwrap();
    writeln!(m, "| win | loss | tie |\n|---|---|---|").unwrap();
    writeln!(m, "| {} | {} | {} |\n", pct(s.win_rate), pct(s.loss_rate), pct(s.tie_rate)).unwrap();
    writeln!(
        m,
        "Mean improvement {} (95% CI [{}, {}]). Static-Oracle gap {:.4}; {} unit(s) above the oracle.\n",
        pct(s.mean_improvement),
        pct(s.improvement_ci.lo),
        pct(s.improvement_ci.hi),
        s.static_oracle_gap,
        s.above_oracle.len()
    )
    .unwrap();
    writeln!(m, "| k | top-k rate |\n|---|---|").unwrap();
    for (k, r) in &s.topk_rates {
        writeln!(m, "| {k} | {} |", pct(*r)).unwrap();
    }
    writeln!(m, "\n| machine | geometric-mean improvement |\n|---|---|").unwrap();
    for (p, g) in &s.per_profile_geomean {
        writeln!(m, "| {p} | {} |", pct(*g)).unwrap();
    }
    writeln!(m, "\nReal switches: {}, cooldown violations: {}.", s.real_switches, s.cooldown_violations).unwrap();
    m
}

/// Improvement over the baseline, scenarios down, machines across.
pub fn heatmap_csv(units: &[ComparisonUnit], baseline: PolicyId) -> Result<String> {
    let grid = improvement_grid(units, baseline)?;
    let mut scenarios: Vec<&str> = Vec::new();
    let mut profiles: Vec<&str> = Vec::new();
    for u in units {
        if !scenarios.contains(&u.scenario_id.as_str()) {
            scenarios.push(&u.scenario_id);
        }
        if !profiles.contains(&u.profile_id.as_str()) {
            profiles.push(&u.profile_id);
        }
    }
    let mut out = String::from("scenario");
    for p in &profiles {
        write!(out, ",{p}").unwrap();
    }
    out.push('\n');
    for s in &scenarios {
        out.push_str(s);
        for p in &profiles {
            match grid.get(&(s.to_string(), p.to_string())) {
                Some(v) => write!(out, ",{v}").unwrap(),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("window,avg_response_delay_ticks,error_rate,decisions\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.window, r.avg_response_delay_ticks, r.error_rate, r.decisions).unwrap();
    }
    out
}

pub fn latency_markdown(r: &LatencyReport) -> String {
    let mut m = format!("# Agent latency ({} decisions, ms)\n\n| | mean | P90 | P95 | P99 |\n|---|---|---|---|---|\n", r.records);
    for (name, s) in [("inference", r.inference), ("decision", r.decision), ("total", r.total)] {
        writeln!(m, "| {name} | {:.4} | {:.4} | {:.4} | {:.4} |", s.mean, s.p90, s.p95, s.p99).unwrap();
    }
    m
}

/// Write the summary in each format, plus the unit table and heatmap.
/// Returns the files written.
pub fn emit_report(dir: &Path, summary: &EvalSummary, units: &[ComparisonUnit], formats: &[Format]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for f in formats {
        let path = match f {
            Format::Json => {
                let p = dir.join("summary.json");
                write_json(&p, summary)?;
                p
            }
            Format::Csv => {
                let p = dir.join("summary.csv");
                write_text(&p, &summary_csv(summary))?;
                p
            }
            Format::Markdown => {
                let p = dir.join("summary.md");
                write_text(&p, &summary_markdown(summary))?;
                p
            }
        };
        written.push(path);
    }
    let p = dir.join("units.csv");
    write_text(&p, &units_csv(units))?;
    written.push(p);
    let p = dir.join("heatmap.csv");
    write_text(&p, &heatmap_csv(units, summary.baseline)?)?;
    written.push(p);
    Ok(written)
}
