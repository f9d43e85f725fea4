//! Feature extraction from trace windows.
//!
//! A [`FeatureVector`] summarizes one sampling window of a trace in a fixed
//! slot order. The same trace also yields the per-window user-facing series
//! (response latency, deadline misses, background throughput) used for
//! scoring.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{mean, nearest_rank};
use crate::sim::{BlockReason, Event, MetricSample, SimConfig, SimRun, TraceEvent};

pub const SCHEMA_VERSION: u32 = 1;

pub const SLOT_NAMES: [&str; NUM_SLOTS] = [
    "cpu_user_util",
    "cpu_idle_util",
    "cpu_iowait_util",
    "hotspot_core_ratio",
    "runqueue_len_mean",
    "runqueue_len_max",
    "ctx_switch_rate",
    "migration_count",
    "wakeup_latency_mean",
    "wakeup_latency_p95",
    "block_time_mean",
    "io_queue_len",
    "io_ops_rate",
    "io_latency_mean",
    "process_count",
    "input_event_rate",
    "input_response_latency_mean",
    "net_like_throughput",
    "deadline_miss_rate",
];

pub const NUM_SLOTS: usize = 19;

/// Slot indices, for readers that want a specific feature.
pub mod slot {
    pub const CPU_USER_UTIL: usize = 0;
    pub const CPU_IDLE_UTIL: usize = 1;
    pub const CPU_IOWAIT_UTIL: usize = 2;
    pub const HOTSPOT_CORE_RATIO: usize = 3;
    pub const RUNQUEUE_LEN_MEAN: usize = 4;
    pub const RUNQUEUE_LEN_MAX: usize = 5;
    pub const CTX_SWITCH_RATE: usize = 6;
    pub const MIGRATION_COUNT: usize = 7;
    pub const WAKEUP_LATENCY_MEAN: usize = 8;
    pub const WAKEUP_LATENCY_P95: usize = 9;
    pub const BLOCK_TIME_MEAN: usize = 10;
    pub const IO_QUEUE_LEN: usize = 11;
    pub const IO_OPS_RATE: usize = 12;
    pub const IO_LATENCY_MEAN: usize = 13;
    pub const PROCESS_COUNT: usize = 14;
    pub const INPUT_EVENT_RATE: usize = 15;
    pub const INPUT_RESPONSE_LATENCY_MEAN: usize = 16;
    pub const NET_LIKE_THROUGHPUT: usize = 17;
    pub const DEADLINE_MISS_RATE: usize = 18;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: u32,
    pub slots: Vec<String>,
}

pub fn feature_schema() -> FeatureSchema {
    FeatureSchema {
        version: SCHEMA_VERSION,
        slots: SLOT_NAMES.iter().map(|s| s.to_string()).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub schema_version: u32,
    pub start_tick: u64,
    pub end_tick: u64,
    pub values: [f64; NUM_SLOTS],
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        SLOT_NAMES
            .iter()
            .position(|&s| s == name)
            .map(|i| self.values[i])
    }
}

/// Events of one half-open tick range `[start_tick, end_tick)`.
#[derive(Debug, Clone, Copy)]
pub struct TraceWindow<'a> {
    pub start_tick: u64,
    pub end_tick: u64,
    pub events: &'a [TraceEvent],
}

/// Cut a tick-ordered trace into consecutive windows of `interval` ticks.
/// A trailing partial window is dropped.
pub fn split_windows(trace: &[TraceEvent], interval: u64, horizon: u64) -> Vec<TraceWindow<'_>> {
    let mut out = Vec::new();
    if interval == 0 {
        return out;
    }
    let mut start = 0;
    while start + interval <= horizon {
        let end = start + interval;
        let lo = trace.partition_point(|e| e.tick < start);
        let hi = trace.partition_point(|e| e.tick < end);
        out.push(TraceWindow {
            start_tick: start,
            end_tick: end,
            events: &trace[lo..hi],
        });
        start = end;
    }
    out
}

/// Event tallies over a window. Everything here adds across windows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowCounts {
    pub ticks: u64,
    pub sample: MetricSample,
    pub samples: u32,
    pub dispatches: u64,
    pub migrations: u64,
    pub wakeup_latencies: Vec<u64>,
    pub block_times: Vec<u64>,
    pub io_ops: u64,
    pub io_latencies: Vec<u64>,
    pub input_events: u64,
    pub response_latencies: Vec<u64>,
    pub net_ops: u64,
    pub deadline_events: u64,
    pub deadline_misses: u64,
}

impl WindowCounts {
    pub fn tally(window: &TraceWindow<'_>) -> Result<Self> {
        let mut c = WindowCounts {
            ticks: window.end_tick - window.start_tick,
            ..Self::default()
        };
        let mut woken_at: BTreeMap<u32, u64> = BTreeMap::new();
        for e in window.events {
            if e.tick < window.start_tick || e.tick >= window.end_tick {
                return Err(Error::EventOutsideWindow {
                    tick: e.tick,
                    start: window.start_tick,
                    end: window.end_tick,
                });
            }
            match &e.event {
                Event::MetricSample(s) => {
                    c.sample.merge(s);
                    c.samples += 1;
                }
                Event::Dispatch { migrated, .. } => {
                    c.dispatches += 1;
                    c.migrations += u64::from(*migrated);
                    if let Some(t) = e.task_id.and_then(|id| woken_at.remove(&id)) {
                        c.wakeup_latencies.push(e.tick - t);
                    }
                }
                Event::Wake {
                    reason,
                    blocked_ticks,
                } => {
                    if let Some(id) = e.task_id {
                        woken_at.insert(id, e.tick);
                    }
                    c.block_times.push(*blocked_ticks);
                    match reason {
                        BlockReason::Io => c.io_latencies.push(*blocked_ticks),
                        BlockReason::Net => c.net_ops += 1,
                        _ => {}
                    }
                }
                Event::Block {
                    reason: BlockReason::Io,
                    ..
                } => c.io_ops += 1,
                Event::InputEvent { .. } => c.input_events += 1,
                Event::InputResponse {
                    latency_ticks,
                    missed,
                    ..
                } => {
                    c.response_latencies.push(*latency_ticks);
                    c.deadline_events += 1;
                    c.deadline_misses += u64::from(*missed);
                }
                Event::FrameEmit { missed, .. } => {
                    c.deadline_events += 1;
                    c.deadline_misses += u64::from(*missed);
                }
                _ => {}
            }
        }
        Ok(c)
    }

    pub fn merge(&mut self, other: &WindowCounts) {
        self.ticks += other.ticks;
        self.sample.merge(&other.sample);
        self.samples += other.samples;
        self.dispatches += other.dispatches;
        self.migrations += other.migrations;
        self.wakeup_latencies.extend_from_slice(&other.wakeup_latencies);
        self.block_times.extend_from_slice(&other.block_times);
        self.io_ops += other.io_ops;
        self.io_latencies.extend_from_slice(&other.io_latencies);
        self.input_events += other.input_events;
        self.response_latencies.extend_from_slice(&other.response_latencies);
        self.net_ops += other.net_ops;
        self.deadline_events += other.deadline_events;
        self.deadline_misses += other.deadline_misses;
    }

    pub fn features(&self, config: &SimConfig, start_tick: u64) -> FeatureVector {
        let secs = self.ticks as f64 / config.ticks_per_sec();
        let rate = |n: u64| if secs > 0.0 { n as f64 / secs } else { 0.0 };
        let mean_u = |v: &[u64]| {
            let f: Vec<f64> = v.iter().map(|&x| x as f64).collect();
            mean(&f)
        };
        let s = &self.sample;
        let core_ticks = s.busy_core_ticks + s.idle_core_ticks + s.stall_core_ticks;
        let (user, idle, iowait) = if core_ticks == 0 {
            (0.0, 1.0, 0.0)
        } else {
            let t = core_ticks as f64;
            (
                s.busy_core_ticks as f64 / t,
                (s.idle_core_ticks - s.iowait_core_ticks) as f64 / t,
                s.iowait_core_ticks as f64 / t,
            )
        };
        let per_tick = |sum: u64| {
            if s.window_ticks == 0 {
                0.0
            } else {
                sum as f64 / s.window_ticks as f64
            }
        };
        let mut wl = self.wakeup_latencies.clone();
        wl.sort_unstable();
        let wl_f: Vec<f64> = wl.iter().map(|&x| x as f64).collect();
        let mut v = [0.0; NUM_SLOTS];
        v[slot::CPU_USER_UTIL] = user;
        v[slot::CPU_IDLE_UTIL] = idle;
        v[slot::CPU_IOWAIT_UTIL] = iowait;
        v[slot::HOTSPOT_CORE_RATIO] = if self.samples == 0 {
            0.0
        } else {
            f64::from(s.hot_cores) / f64::from(config.num_cores)
        };
        v[slot::RUNQUEUE_LEN_MEAN] = per_tick(s.runqueue_sum);
        v[slot::RUNQUEUE_LEN_MAX] = s.runqueue_max as f64;
        v[slot::CTX_SWITCH_RATE] = rate(self.dispatches);
        v[slot::MIGRATION_COUNT] = self.migrations as f64;
        v[slot::WAKEUP_LATENCY_MEAN] = mean(&wl_f);
        v[slot::WAKEUP_LATENCY_P95] = nearest_rank(&wl_f, 95.0);
        v[slot::BLOCK_TIME_MEAN] = mean_u(&self.block_times);
        v[slot::IO_QUEUE_LEN] = per_tick(s.io_queue_sum);
        v[slot::IO_OPS_RATE] = rate(self.io_ops);
        v[slot::IO_LATENCY_MEAN] = mean_u(&self.io_latencies);
        v[slot::PROCESS_COUNT] = per_tick(s.live_task_ticks);
        v[slot::INPUT_EVENT_RATE] = rate(self.input_events);
        v[slot::INPUT_RESPONSE_LATENCY_MEAN] = mean_u(&self.response_latencies);
        v[slot::NET_LIKE_THROUGHPUT] = rate(self.net_ops);
        v[slot::DEADLINE_MISS_RATE] = if self.deadline_events == 0 {
            0.0
        } else {
            self.deadline_misses as f64 / self.deadline_events as f64
        };
        FeatureVector {
            schema_version: SCHEMA_VERSION,
            start_tick,
            end_tick: start_tick + self.ticks,
            values: v,
        }
    }
}

/// Features of one sampling window. The window must span exactly
/// `config.sample_interval_ticks`.
pub fn extract_features(window: &TraceWindow<'_>, config: &SimConfig) -> Result<FeatureVector> {
    let len = window.end_tick.saturating_sub(window.start_tick);
    if len != config.sample_interval_ticks || window.end_tick <= window.start_tick {
        return Err(Error::WindowLength {
            expected: config.sample_interval_ticks,
            got: len,
        });
    }
    Ok(WindowCounts::tally(window)?.features(config, window.start_tick))
}

/// Feature vectors for every full sampling window of a run.
pub fn run_features(run: &SimRun) -> Result<Vec<FeatureVector>> {
    split_windows(&run.trace, run.config.sample_interval_ticks, run.horizon_ticks)
        .iter()
        .map(|w| extract_features(w, &run.config))
        .collect()
}

/// Names of the user-facing series available from a run.
pub const SCORE_METRICS: [&str; 3] = ["response_latency_ms", "deadline_miss_rate", "bg_throughput"];

/// Per-window user-facing series of a run.
///
/// A deadline-carrying event (input response or frame) belongs to the
/// window in which it completed. Inputs still unanswered when the run ends
/// count as completed at the horizon, late by however long they waited, so
/// a starved task cannot look responsive. Windows with no deadline-carrying
/// event are left out of the latency and miss series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub response_latency_ms: Vec<f64>,
    pub deadline_miss_rate: Vec<f64>,
    pub bg_throughput: Vec<f64>,
}

impl ScoreSeries {
    pub fn get(&self, name: &str) -> Result<&[f64]> {
        let v = match name {
            "response_latency_ms" => &self.response_latency_ms,
            "deadline_miss_rate" => &self.deadline_miss_rate,
            "bg_throughput" => &self.bg_throughput,
            _ => return Err(Error::MissingMetric(name.to_string())),
        };
        if v.is_empty() {
            return Err(Error::MissingMetric(name.to_string()));
        }
        Ok(v)
    }
}

pub fn score_series(run: &SimRun) -> ScoreSeries {
    let interval = run.config.sample_interval_ticks;
    let n = (run.horizon_ticks / interval).max(1) as usize;
    let ms_per_tick = f64::from(run.config.tick_us) / 1000.0;
    let secs = interval as f64 / run.config.ticks_per_sec();
    let mut lat: Vec<Vec<f64>> = alloc::vec![Vec::new(); n];
    let mut miss: Vec<(u64, u64)> = alloc::vec![(0, 0); n];
    let mut bg: Vec<f64> = Vec::with_capacity(n);
    let mut pending: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    let slot = |tick: u64| ((tick / interval) as usize).min(n - 1);
    for e in &run.trace {
        match &e.event {
            Event::InputEvent { seq } => {
                if let Some(id) = e.task_id {
                    pending.insert((id, *seq), e.tick);
                }
            }
            Event::InputResponse {
                seq,
                latency_ticks,
                missed,
            } => {
                if let Some(id) = e.task_id {
                    pending.remove(&(id, *seq));
                }
                let k = slot(e.tick);
                lat[k].push(*latency_ticks as f64 * ms_per_tick);
                miss[k].0 += 1;
                miss[k].1 += u64::from(*missed);
            }
            Event::FrameEmit {
                latency_ticks,
                missed,
                ..
            } => {
                let k = slot(e.tick);
                lat[k].push(*latency_ticks as f64 * ms_per_tick);
                miss[k].0 += 1;
                miss[k].1 += u64::from(*missed);
            }
            Event::MetricSample(s) => {
                bg.push(s.bg_work as f64 / 1000.0 / secs);
            }
            _ => {}
        }
    }
    for (_, at) in pending {
        let k = n - 1;
        lat[k].push((run.horizon_ticks - at) as f64 * ms_per_tick);
        miss[k].0 += 1;
        miss[k].1 += 1;
    }
    let mut out = ScoreSeries {
        response_latency_ms: Vec::new(),
        deadline_miss_rate: Vec::new(),
        bg_throughput: bg,
    };
    for k in 0..n {
        if miss[k].0 > 0 {
            out.response_latency_ms.push(mean(&lat[k]));
            out.deadline_miss_rate.push(miss[k].1 as f64 / miss[k].0 as f64);
        }
    }
    out
}

/// Fraction of delivered work that went to foreground tasks.
pub fn foreground_share(run: &SimRun) -> f64 {
    let (mut fg, mut bg) = (0u64, 0u64);
    for e in &run.trace {
        if let Event::MetricSample(s) = &e.event {
            fg += s.fg_work;
            bg += s.bg_work;
        }
    }
    if fg + bg == 0 {
        0.0
    } else {
        fg as f64 / (fg + bg) as f64
    }
}
