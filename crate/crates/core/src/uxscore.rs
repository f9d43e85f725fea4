//! User-experience scoring.
//!
//! Each metric gets a stability score from the variance of its per-window
//! series and a value score from its mean, pushed through a sigmoid centered
//! on a threshold `theta`. The two are fused with fixed weights, and metric
//! scores are combined by a weighted mean into one scenario score in
//! `[0, 1]`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{mean, median, population_variance};
use crate::metrics::{score_series, ScoreSeries};
use crate::sim::SimRun;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LargerBetter,
    SmallerBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    pub k_s: f64,
    pub gamma_s: f64,
    pub k_v: f64,
    pub gamma_v: f64,
    pub theta: f64,
    pub f: f64,
    pub direction: Direction,
    pub w_stability: f64,
    pub w_value: f64,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self {
            k_s: 1.0,
            gamma_s: 1.0,
            k_v: 1.0,
            gamma_v: 1.0,
            theta: 0.0,
            f: 1.0,
            direction: Direction::LargerBetter,
            w_stability: 0.4,
            w_value: 0.6,
        }
    }
}

impl ScoreParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !(pos(self.k_s) && pos(self.gamma_s) && pos(self.k_v) && pos(self.gamma_v)) {
            return Err(Error::InvalidScoreParams(
                "k_s, gamma_s, k_v and gamma_v must be positive".into(),
            ));
        }
        if !pos(self.f) {
            return Err(Error::InvalidScoreParams("f must be positive".into()));
        }
        if !self.theta.is_finite() {
            return Err(Error::InvalidScoreParams("theta must be finite".into()));
        }
        check_weights(self.w_stability, self.w_value)
    }
}

fn check_weights(ws: f64, wv: f64) -> Result<()> {
    if ws < 0.0 || wv < 0.0 || libm::fabs(ws + wv - 1.0) > 1e-9 {
        return Err(Error::InvalidScoreParams(
            "fusion weights must be non-negative and sum to 1".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub metric_name: String,
    pub samples: Vec<f64>,
    #[serde(default)]
    pub units: String,
}

impl MetricSeries {
    pub fn new(name: &str, samples: Vec<f64>) -> Self {
        Self {
            metric_name: name.to_string(),
            samples,
            units: String::new(),
        }
    }
}

/// `1 / (1 + k_s * var^gamma_s)` with `var` the population variance.
pub fn stability_score(series: &MetricSeries, params: &ScoreParams) -> f64 {
    let var = population_variance(&series.samples);
    1.0 / (1.0 + params.k_s * libm::pow(var, params.gamma_s))
}

/// Sigmoid of the signed, scaled distance from `theta`. The power keeps the
/// sign of `x - theta`, so the curve is defined on both sides and
/// `value_score(theta) == 0.5`.
pub fn value_score(x: f64, params: &ScoreParams) -> f64 {
    let d = x - params.theta;
    let mag = libm::pow(libm::fabs(d) / params.f, params.gamma_v);
    let u = if d < 0.0 { -mag } else { mag };
    let exponent = match params.direction {
        Direction::LargerBetter => -params.k_v * u,
        Direction::SmallerBetter => params.k_v * u,
    };
    1.0 / (1.0 + libm::exp(exponent))
}

pub fn fuse(stability: f64, value: f64, params: &ScoreParams) -> Result<f64> {
    check_weights(params.w_stability, params.w_value)?;
    Ok(params.w_stability * stability + params.w_value * value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub metric_name: String,
    pub params: ScoreParams,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub metric_name: String,
    pub mean: f64,
    pub stability: f64,
    pub value: f64,
    pub fused: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScore {
    pub overall: f64,
    pub per_metric: Vec<MetricScore>,
}

pub fn score_metric(series: &MetricSeries, spec: &MetricSpec) -> Result<MetricScore> {
    spec.params.validate()?;
    if series.samples.is_empty() {
        return Err(Error::MissingMetric(series.metric_name.clone()));
    }
    let m = mean(&series.samples);
    let stability = stability_score(series, &spec.params);
    let value = value_score(m, &spec.params);
    Ok(MetricScore {
        metric_name: spec.metric_name.clone(),
        mean: m,
        stability,
        value,
        fused: fuse(stability, value, &spec.params)?,
        weight: spec.weight,
    })
}

/// Weighted mean of fused metric scores.
pub fn combine(per_metric: Vec<MetricScore>) -> Result<ScenarioScore> {
    let total: f64 = per_metric.iter().map(|m| m.weight).sum();
    if per_metric.is_empty() || total <= 0.0 || per_metric.iter().any(|m| m.weight < 0.0) {
        return Err(Error::InvalidScoreParams("metric weights must be non-negative with a positive sum".into()));
    }
    let overall = per_metric.iter().map(|m| m.weight * m.fused).sum::<f64>() / total;
    Ok(ScenarioScore {
        overall,
        per_metric,
    })
}

pub fn score_from_series(series: &ScoreSeries, specs: &[MetricSpec]) -> Result<ScenarioScore> {
    let per = specs
        .iter()
        .map(|spec| {
            let s = MetricSeries::new(&spec.metric_name, series.get(&spec.metric_name)?.to_vec());
            score_metric(&s, spec)
        })
        .collect::<Result<Vec<_>>>()?;
    combine(per)
}

pub fn score_run(run: &SimRun, specs: &[MetricSpec]) -> Result<ScenarioScore> {
    score_from_series(&score_series(run), specs)
}

/// How a metric enters the score before calibration fixes `theta`, `f` and
/// `k_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTemplate {
    pub metric_name: String,
    pub direction: Direction,
    pub weight: f64,
    /// Lower bounds on `f`: absolute, and relative to `|theta|`.
    pub f_floor: f64,
    pub f_floor_rel: f64,
    /// Lower bound on the reference variance that sets `k_s`, absolute and
    /// relative to `theta^2`.
    pub var_floor: f64,
    pub var_floor_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub gamma_s: f64,
    pub k_v: f64,
    pub gamma_v: f64,
    pub w_stability: f64,
    pub w_value: f64,
    pub metrics: Vec<MetricTemplate>,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        let m = |name: &str, direction, weight, f_floor, f_floor_rel, var_floor, var_floor_rel| {
            MetricTemplate {
                metric_name: name.to_string(),
                direction,
                weight,
                f_floor,
                f_floor_rel,
                var_floor,
                var_floor_rel,
            }
        };
        Self {
            gamma_s: 1.0,
            k_v: 2.0,
            gamma_v: 1.0,
            w_stability: 0.4,
            w_value: 0.6,
            metrics: alloc::vec![
                m("response_latency_ms", Direction::SmallerBetter, 0.4, 0.25, 0.05, 0.01, 0.0025),
                m("deadline_miss_rate", Direction::SmallerBetter, 0.3, 0.01, 0.05, 1e-4, 0.0025),
                m("bg_throughput", Direction::LargerBetter, 0.3, 0.01, 0.01, 1e-6, 1e-4),
            ],
        }
    }
}

/// Fix the data-dependent parameters from a reference set of runs of one
/// scenario on one machine: `theta` is the median of the run means, `f` is
/// their standard deviation (floored), and `k_s` makes the median
/// within-run variance score 0.5 on stability.
pub fn calibrate(reference: &[&ScoreSeries], config: &ScoringConfig) -> Result<Vec<MetricSpec>> {
    if reference.is_empty() {
        return Err(Error::NoRecords);
    }
    check_weights(config.w_stability, config.w_value)?;
    config
        .metrics
        .iter()
        .map(|t| {
            let mut means = Vec::with_capacity(reference.len());
            let mut vars = Vec::with_capacity(reference.len());
            for s in reference {
                let xs = s.get(&t.metric_name)?;
                means.push(mean(xs));
                vars.push(population_variance(xs));
            }
            let theta = median(&means);
            let spread = libm::sqrt(population_variance(&means));
            let f = spread.max(t.f_floor).max(t.f_floor_rel * libm::fabs(theta));
            let var_ref = median(&vars)
                .max(t.var_floor)
                .max(t.var_floor_rel * theta * theta);
            let params = ScoreParams {
                k_s: 1.0 / libm::pow(var_ref, config.gamma_s),
                gamma_s: config.gamma_s,
                k_v: config.k_v,
                gamma_v: config.gamma_v,
                theta,
                f,
                direction: t.direction,
                w_stability: config.w_stability,
                w_value: config.w_value,
            };
            params.validate()?;
            Ok(MetricSpec {
                metric_name: t.metric_name.clone(),
                params,
                weight: t.weight,
            })
        })
        .collect()
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn value_directions_are_complementary(
            x in -1e3f64..1e3,
            theta in -1e3f64..1e3,
            f in 1e-3f64..1e3,
            k_v in 0.01f64..10.0,
            gamma_v in 0.2f64..4.0,
        ) {
            let base = ScoreParams { theta, f, k_v, gamma_v, ..ScoreParams::default() };
            let up = value_score(x, &ScoreParams { direction: Direction::LargerBetter, ..base });
            let down = value_score(x, &ScoreParams { direction: Direction::SmallerBetter, ..base });
            prop_assert!((up + down - 1.0).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&up));
        }

        #[test]
        fn value_is_monotone(a in -50f64..50.0, b in -50f64..50.0, gamma_v in 0.2f64..4.0) {
            let q = ScoreParams { gamma_v, ..ScoreParams::default() };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(value_score(lo, &q) <= value_score(hi, &q));
        }

        #[test]
        fn stability_in_unit_interval(xs in proptest::collection::vec(-1e4f64..1e4, 1..50), k_s in 1e-6f64..1e3) {
            let q = ScoreParams { k_s, ..ScoreParams::default() };
            let s = stability_score(&MetricSeries::new("x", xs), &q);
            prop_assert!(s > 0.0 && s <= 1.0);
        }
    }
}
