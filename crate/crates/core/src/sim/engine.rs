use alloc::boxed::Box;
use alloc::collections::{BinaryHeap, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policies::{self, nice_to_weight, Policy, PolicyId, Portfolio, TaskIdx, TaskView};
use crate::rng::derive_seed;
use crate::workloads::Scenario;

use super::config::SimConfig;
use super::controller::{DecisionContext, PolicyController};
use super::task::{Behavior, SimTask, TaskClass};
use super::trace::{BlockReason, EnqueueReason, Event, MetricSample, TraceEvent};

/// Work is tracked in thousandths of a work tick.
const WORK_SCALE: u64 = 1000;
/// Pending frames kept per frame loop before the oldest is dropped.
const FRAME_BACKLOG: usize = 8;
const LOTTERY_STREAM: u64 = 0x6c6f_7474_0000_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    NotArrived,
    Runnable,
    Running(u32),
    Blocked { reason: BlockReason, since: u64 },
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Timer {
    Departure,
    Arrival,
    Wake,
    FrameRelease,
}

struct TaskRt {
    spec: SimTask,
    weight: u32,
    state: State,
    rem_burst: u64,
    rem_total: Option<u64>,
    last_core: Option<u32>,
    woke: bool,
    deadline: Option<u64>,
    rng: ChaCha8Rng,
    seq: u32,
    input_at: u64,
    frames: VecDeque<(u32, u64)>,
    next_release: u64,
    acct: TaskAccount,
}

#[derive(Debug, Clone, Copy, Default)]
struct CoreRt {
    running: Option<TaskIdx>,
    ran: u64,
    cold_until: u64,
    last_task: Option<TaskIdx>,
    window_busy: u64,
}

/// Per-task totals at the end of a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskAccount {
    pub task_id: u32,
    pub executed_ticks: u64,
    /// Work completed, in work ticks (rounded down).
    pub work_done: u64,
    pub dispatches: u64,
    pub preempts: u64,
    pub completed_at: Option<u64>,
}

/// Core-tick totals over the whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreTotals {
    pub busy: u64,
    pub idle: u64,
    pub iowait: u64,
    pub stall: u64,
}

/// A finished run. Immutable once produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRun {
    pub scenario_id: String,
    pub config: SimConfig,
    pub horizon_ticks: u64,
    pub trace: Vec<TraceEvent>,
    pub tasks: Vec<TaskAccount>,
    pub totals: CoreTotals,
    /// Ticks each policy spent as the active policy, in portfolio order.
    pub policy_ticks: Vec<(PolicyId, u64)>,
    pub final_policy: PolicyId,
}

impl SimRun {
    /// The policy that was active for the most ticks; earlier portfolio
    /// entries win ties.
    pub fn dominant_policy(&self) -> PolicyId {
        let mut best = (self.final_policy, 0u64);
        for &(p, t) in &self.policy_ticks {
            if t > best.1 {
                best = (p, t);
            }
        }
        best.0
    }
}

/// Incremental simulation state. Most callers want [`run_simulation`].
pub struct Engine {
    cfg: SimConfig,
    scenario_id: String,
    horizon: u64,
    now: u64,
    tasks: Vec<TaskRt>,
    cores: Vec<CoreRt>,
    policy: Box<dyn Policy>,
    active: PolicyId,
    portfolio: Portfolio,
    timers: BinaryHeap<Reverse<(u64, Timer, TaskIdx)>>,
    stall_until: u64,
    last_switch: Option<u64>,
    switches: u64,
    trace: Vec<TraceEvent>,
    window: MetricSample,
    totals: CoreTotals,
    policy_ticks: Vec<(PolicyId, u64)>,
    runnable: u64,
    io_blocked: u64,
    live: u64,
    interval: Option<u64>,
    decision_mark: usize,
    finished: bool,
}

pub fn validate_scenario(scenario: &Scenario) -> Result<()> {
    if scenario.tasks.is_empty() {
        return Err(Error::EmptyScenario);
    }
    if scenario.horizon_ticks == 0 {
        return Err(Error::InvalidConfig("horizon_ticks must be positive".into()));
    }
    let mut ids: Vec<u32> = scenario.tasks.iter().map(|t| t.task_id).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidTask {
            task_id: w[0],
            reason: "duplicate task_id".into(),
        });
    }
    scenario.tasks.iter().try_for_each(SimTask::validate)
}

impl Engine {
    pub fn new(
        config: &SimConfig,
        scenario: &Scenario,
        controller: &dyn PolicyController,
    ) -> Result<Self> {
        Self::with_portfolio(config, scenario, controller, Portfolio::default())
    }

    pub fn with_portfolio(
        config: &SimConfig,
        scenario: &Scenario,
        controller: &dyn PolicyController,
        portfolio: Portfolio,
    ) -> Result<Self> {
        config.validate()?;
        validate_scenario(scenario)?;
        let active = controller.initial_policy();
        if !portfolio.contains(active) {
            return Err(Error::PolicyNotInPortfolio(active));
        }
        if controller.interval() == Some(0) {
            return Err(Error::InvalidConfig("decision interval must be positive".into()));
        }
        let mut specs = scenario.tasks.clone();
        specs.sort_by_key(|t| t.task_id);
        let tasks: Vec<TaskRt> = specs
            .into_iter()
            .map(|spec| TaskRt {
                weight: nice_to_weight(spec.nice),
                state: State::NotArrived,
                rem_burst: 0,
                rem_total: spec.total_work_ticks.map(|w| w * WORK_SCALE),
                last_core: None,
                woke: false,
                deadline: None,
                rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, u64::from(spec.task_id))),
                seq: 0,
                input_at: 0,
                frames: VecDeque::new(),
                next_release: 0,
                acct: TaskAccount {
                    task_id: spec.task_id,
                    ..TaskAccount::default()
                },
                spec,
            })
            .collect();
        let mut timers = BinaryHeap::new();
        for (i, t) in tasks.iter().enumerate() {
            if t.spec.arrival_tick < scenario.horizon_ticks {
                timers.push(Reverse((t.spec.arrival_tick, Timer::Arrival, i)));
            }
            if let Some(d) = t.spec.departure_tick.filter(|&d| d < scenario.horizon_ticks) {
                timers.push(Reverse((d, Timer::Departure, i)));
            }
        }
        let policy_ticks = portfolio.ids().iter().map(|&p| (p, 0)).collect();
        let mut engine = Self {
            policy: policies::build(active, &config.policies, derive_seed(config.seed, LOTTERY_STREAM)),
            cfg: config.clone(),
            scenario_id: scenario.scenario_id.clone(),
            horizon: scenario.horizon_ticks,
            now: 0,
            tasks,
            cores: vec![CoreRt::default(); config.num_cores as usize],
            active,
            portfolio,
            timers,
            stall_until: 0,
            last_switch: None,
            switches: 0,
            trace: Vec::new(),
            window: MetricSample::default(),
            totals: CoreTotals::default(),
            policy_ticks,
            runnable: 0,
            io_blocked: 0,
            live: 0,
            interval: controller.interval(),
            decision_mark: 0,
            finished: false,
        };
        engine.fire_timers();
        engine.preempt_and_dispatch();
        Ok(engine)
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn active_policy(&self) -> PolicyId {
        self.active
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn totals(&self) -> CoreTotals {
        self.totals
    }

    /// Advance exactly one tick.
    pub fn step_tick(&mut self, controller: &mut dyn PolicyController) -> Result<()> {
        self.advance(controller, 1)
    }

    /// Advance to the next tick at which anything can happen, but by no more
    /// than `max_ticks`. Produces the same trace as repeated `step_tick`.
    pub fn advance(&mut self, controller: &mut dyn PolicyController, max_ticks: u64) -> Result<()> {
        if self.finished {
            return Ok(());
        }
        let d = self.span().min(max_ticks.max(1));
        self.execute(d);
        self.boundary(controller)
    }

    pub fn run_to_end(&mut self, controller: &mut dyn PolicyController) -> Result<()> {
        while !self.finished {
            self.advance(controller, u64::MAX)?;
        }
        Ok(())
    }

    /// Switch the active policy (or, in shadow mode, go through the motions
    /// without changing it). Either way every core stalls for the configured
    /// switch cost.
    pub fn apply_policy_switch(&mut self, policy: PolicyId, shadow: bool) -> Result<()> {
        if !self.portfolio.contains(policy) {
            return Err(Error::PolicyNotInPortfolio(policy));
        }
        if !shadow && policy == self.active {
            return Ok(());
        }
        let cost = self.cfg.switch_cost_ticks;
        self.emit(
            Event::PolicySwitch {
                from: self.active,
                to: policy,
                shadow,
                stall_ticks: cost,
            },
            None,
        );
        if !shadow {
            for core in 0..self.cores.len() {
                if let Some(idx) = self.cores[core].running {
                    let ran = self.cores[core].ran;
                    self.emit(
                        Event::Preempt {
                            core: core as u32,
                            ran_ticks: ran,
                        },
                        Some(idx),
                    );
                    self.tasks[idx].acct.preempts += 1;
                    self.vacate(core, State::Runnable);
                    self.runnable += 1;
                    self.emit(
                        Event::Enqueue {
                            reason: EnqueueReason::Switch,
                        },
                        Some(idx),
                    );
                }
            }
            self.switches += 1;
            self.policy = policies::build(
                policy,
                &self.cfg.policies,
                derive_seed(self.cfg.seed, LOTTERY_STREAM + self.switches),
            );
            self.active = policy;
            for idx in 0..self.tasks.len() {
                if self.tasks[idx].state == State::Runnable {
                    let view = self.view(idx);
                    self.policy.on_enqueue(&view, self.now);
                }
            }
        }
        self.last_switch = Some(self.now);
        self.stall_until = self.stall_until.max(self.now + cost);
        Ok(())
    }

    pub fn into_run(self) -> SimRun {
        SimRun {
            scenario_id: self.scenario_id,
            config: self.cfg,
            horizon_ticks: self.horizon,
            trace: self.trace,
            tasks: self.tasks.into_iter().map(|t| t.acct).collect(),
            totals: self.totals,
            policy_ticks: self.policy_ticks,
            final_policy: self.active,
        }
    }

    fn emit(&mut self, event: Event, idx: Option<TaskIdx>) {
        let task_id = idx.map(|i| self.tasks[i].spec.task_id);
        self.trace.push(TraceEvent {
            tick: self.now,
            event,
            task_id,
        });
    }

    fn view(&self, idx: TaskIdx) -> TaskView {
        let t = &self.tasks[idx];
        TaskView {
            idx,
            weight: t.weight,
            last_core: t.last_core,
            woke: t.woke,
            deadline: t.deadline,
        }
    }

    fn stalled(&self) -> bool {
        self.now < self.stall_until
    }

    fn rate(&self, core: usize) -> u64 {
        let warm = u64::from(self.cfg.core_speed_permille);
        if self.now < self.cores[core].cold_until {
            (warm / 2).max(1)
        } else {
            warm
        }
    }

    fn jitter(&mut self, idx: TaskIdx, base: u64) -> u64 {
        let t = &mut self.tasks[idx];
        let j = i64::from(t.spec.jitter_permille);
        if j == 0 || base == 0 {
            return base;
        }
        let r = t.rng.random_range(-j..=j);
        let scaled = (base as i128 * (1000 + r) as i128 / 1000) as u64;
        scaled.max(1)
    }

    fn next_multiple(&self, step: u64) -> u64 {
        (self.now / step + 1) * step
    }

    /// Ticks until the next point where state can change.
    fn span(&self) -> u64 {
        let mut next = self.horizon;
        next = next.min(self.next_multiple(self.cfg.sample_interval_ticks));
        if let Some(k) = self.interval {
            next = next.min(self.next_multiple(k));
        }
        if let Some(Reverse((t, _, _))) = self.timers.peek() {
            next = next.min(*t);
        }
        if self.stalled() {
            next = next.min(self.stall_until);
        } else {
            for (c, core) in self.cores.iter().enumerate() {
                let Some(idx) = core.running else { continue };
                let t = &self.tasks[idx];
                let rate = self.rate(c);
                if core.cold_until > self.now {
                    next = next.min(core.cold_until);
                }
                let need = t.rem_total.map_or(t.rem_burst, |r| r.min(t.rem_burst));
                next = next.min(self.now + need.div_ceil(rate).max(1));
                if let Some(dt) = self.policy.next_check_in(&self.view(idx), core.ran) {
                    next = next.min(self.now + dt);
                }
            }
        }
        next.saturating_sub(self.now).max(1)
    }

    fn execute(&mut self, d: u64) {
        let stalled = self.stalled();
        let n = self.cores.len() as u64;
        if stalled {
            self.totals.stall += n * d;
            self.window.stall_core_ticks += n * d;
        } else {
            for c in 0..self.cores.len() {
                match self.cores[c].running {
                    Some(idx) => {
                        let work = self.rate(c) * d;
                        let t = &mut self.tasks[idx];
                        let done = work.min(t.rem_burst).min(t.rem_total.unwrap_or(u64::MAX));
                        t.rem_burst -= done;
                        if let Some(r) = t.rem_total.as_mut() {
                            *r -= done;
                        }
                        t.acct.executed_ticks += d;
                        t.acct.work_done += done;
                        match t.spec.class {
                            TaskClass::Foreground => self.window.fg_work += done,
                            TaskClass::Background => self.window.bg_work += done,
                        }
                        self.cores[c].ran += d;
                        self.cores[c].window_busy += d;
                        self.totals.busy += d;
                        self.window.busy_core_ticks += d;
                        let view = self.view(idx);
                        self.policy.on_tick(c as u32, &view, d);
                    }
                    None => {
                        self.totals.idle += d;
                        self.window.idle_core_ticks += d;
                        if self.io_blocked > 0 {
                            self.totals.iowait += d;
                            self.window.iowait_core_ticks += d;
                        }
                    }
                }
            }
        }
        self.window.window_ticks += d;
        self.window.runqueue_sum += self.runnable * d;
        self.window.runqueue_max = self.window.runqueue_max.max(self.runnable);
        self.window.io_queue_sum += self.io_blocked * d;
        self.window.live_task_ticks += self.live * d;
        if let Some(slot) = self.policy_ticks.iter_mut().find(|(p, _)| *p == self.active) {
            slot.1 += d;
        }
        self.now += d;
    }

    fn boundary(&mut self, controller: &mut dyn PolicyController) -> Result<()> {
        let interval = self.cfg.sample_interval_ticks;
        if self.now % interval == 0 {
            self.emit_sample();
        }
        if self.now >= self.horizon {
            self.finished = true;
            return Ok(());
        }
        let window_end = self.trace.len();
        self.finish_bursts();
        self.fire_timers();
        if let Some(k) = self.interval.filter(|&k| self.now % k == 0) {
            let window_start = self.decision_mark;
            self.decision_mark = window_end;
            let request = {
                let ctx = DecisionContext {
                    tick: self.now,
                    window: &self.trace[window_start..window_end],
                    interval: k,
                    active: self.active,
                    last_switch_tick: self.last_switch,
                    config: &self.cfg,
                };
                controller.on_interval(&ctx)?
            };
            if let Some(req) = request {
                self.apply_policy_switch(req.policy, req.shadow)?;
            }
        }
        self.preempt_and_dispatch();
        Ok(())
    }

    fn emit_sample(&mut self) {
        let threshold = self.window.window_ticks * 9;
        let mut sample = core::mem::take(&mut self.window);
        sample.hot_cores = self
            .cores
            .iter()
            .filter(|c| c.window_busy * 10 >= threshold && c.window_busy > 0)
            .count() as u32;
        for c in &mut self.cores {
            c.window_busy = 0;
        }
        self.trace.push(TraceEvent {
            tick: self.now - 1,
            event: Event::MetricSample(sample),
            task_id: None,
        });
    }

    /// Free `core`, leaving its task in `next`.
    fn vacate(&mut self, core: usize, next: State) {
        if let Some(idx) = self.cores[core].running.take() {
            let t = &mut self.tasks[idx];
            t.state = next;
            t.last_core = Some(core as u32);
            if next == State::Runnable {
                t.woke = false;
            }
        }
        self.cores[core].ran = 0;
    }

    fn finish_bursts(&mut self) {
        for core in 0..self.cores.len() {
            let Some(idx) = self.cores[core].running else { continue };
            let t = &self.tasks[idx];
            if t.rem_burst > 0 && t.rem_total != Some(0) {
                continue;
            }
            self.on_burst_done(core, idx);
        }
    }

    fn on_burst_done(&mut self, core: usize, idx: TaskIdx) {
        let spec = self.tasks[idx].spec.clone();
        let deadline = spec.deadline_ticks.unwrap_or(u64::MAX);
        match spec.behavior {
            Behavior::Interactive => {
                let t = &mut self.tasks[idx];
                let latency = self.now - t.input_at;
                let seq = t.seq;
                t.deadline = None;
                self.emit(
                    Event::InputResponse {
                        seq,
                        latency_ticks: latency,
                        missed: latency > deadline,
                    },
                    Some(idx),
                );
            }
            Behavior::FrameLoop => {
                if let Some((seq, release)) = self.tasks[idx].frames.pop_front() {
                    let latency = self.now - release;
                    self.emit(
                        Event::FrameEmit {
                            seq,
                            latency_ticks: latency,
                            missed: latency > deadline,
                        },
                        Some(idx),
                    );
                }
                let t = &mut self.tasks[idx];
                t.deadline = t.frames.front().map(|&(_, r)| r + deadline);
            }
            _ => {}
        }

        if self.tasks[idx].rem_total == Some(0) {
            self.emit(
                Event::Complete {
                    core: Some(core as u32),
                },
                Some(idx),
            );
            self.tasks[idx].acct.completed_at = Some(self.now);
            self.retire(idx);
            return;
        }

        let (reason, wait) = match spec.behavior {
            Behavior::CpuBurst if spec.wait_ticks == 0 => {
                self.tasks[idx].rem_burst = self.jitter(idx, spec.burst_ticks) * WORK_SCALE;
                return;
            }
            Behavior::CpuBurst => (BlockReason::Sleep, self.jitter(idx, spec.wait_ticks)),
            Behavior::IoCycle => (BlockReason::Io, self.jitter(idx, spec.wait_ticks)),
            Behavior::NetworkLike => (BlockReason::Net, self.jitter(idx, spec.wait_ticks)),
            Behavior::Interactive => (BlockReason::Input, self.jitter(idx, spec.wait_ticks)),
            Behavior::FrameLoop => {
                if !self.tasks[idx].frames.is_empty() {
                    self.tasks[idx].rem_burst = self.jitter(idx, spec.burst_ticks) * WORK_SCALE;
                    return;
                }
                (BlockReason::Frame, self.tasks[idx].next_release - self.now)
            }
        };
        self.emit(
            Event::Block {
                core: core as u32,
                reason,
                wait_ticks: wait,
            },
            Some(idx),
        );
        self.vacate(
            core,
            State::Blocked {
                reason,
                since: self.now,
            },
        );
        self.tasks[idx].woke = false;
        if reason == BlockReason::Io {
            self.io_blocked += 1;
        }
        let view = self.view(idx);
        self.policy.on_block(&view, self.now);
        if reason != BlockReason::Frame {
            self.timers.push(Reverse((self.now + wait, Timer::Wake, idx)));
        }
    }

    /// Remove a task from the system for good.
    fn retire(&mut self, idx: TaskIdx) {
        let was_live = !matches!(self.tasks[idx].state, State::NotArrived | State::Done);
        match self.tasks[idx].state {
            State::Running(core) => self.vacate(core as usize, State::Done),
            State::Runnable => self.runnable -= 1,
            State::Blocked {
                reason: BlockReason::Io,
                ..
            } => self.io_blocked -= 1,
            _ => {}
        }
        if was_live {
            self.live -= 1;
        }
        let t = &mut self.tasks[idx];
        t.state = State::Done;
        t.deadline = None;
    }

    fn make_runnable(&mut self, idx: TaskIdx, reason: EnqueueReason) {
        self.tasks[idx].state = State::Runnable;
        self.runnable += 1;
        self.emit(Event::Enqueue { reason }, Some(idx));
        let view = self.view(idx);
        self.policy.on_enqueue(&view, self.now);
    }

    fn wake(&mut self, idx: TaskIdx) {
        let State::Blocked { reason, since } = self.tasks[idx].state else {
            return;
        };
        if reason == BlockReason::Io {
            self.io_blocked -= 1;
        }
        let spec_burst = self.tasks[idx].spec.burst_ticks;
        self.tasks[idx].rem_burst = self.jitter(idx, spec_burst) * WORK_SCALE;
        self.emit(
            Event::Wake {
                reason,
                blocked_ticks: self.now - since,
            },
            Some(idx),
        );
        self.tasks[idx].woke = true;
        let view = self.view(idx);
        self.policy.on_wake(&view, self.now);
        self.make_runnable(idx, EnqueueReason::Wake);
    }

    fn fire_timers(&mut self) {
        while let Some(&Reverse((t, kind, idx))) = self.timers.peek() {
            if t > self.now {
                break;
            }
            self.timers.pop();
            if self.tasks[idx].state == State::Done {
                continue;
            }
            match kind {
                Timer::Departure => {
                    let core = match self.tasks[idx].state {
                        State::Running(c) => Some(c),
                        _ => None,
                    };
                    self.emit(Event::Complete { core }, Some(idx));
                    self.retire(idx);
                }
                Timer::Arrival => self.arrive(idx),
                Timer::Wake => {
                    if self.tasks[idx].spec.behavior == Behavior::Interactive {
                        let deadline = self.tasks[idx].spec.deadline_ticks.unwrap_or(0);
                        let t = &mut self.tasks[idx];
                        t.seq += 1;
                        t.input_at = self.now;
                        t.deadline = Some(self.now + deadline);
                        let seq = t.seq;
                        self.emit(Event::InputEvent { seq }, Some(idx));
                    }
                    self.wake(idx);
                }
                Timer::FrameRelease => self.release_frame(idx),
            }
        }
    }

    fn arrive(&mut self, idx: TaskIdx) {
        self.live += 1;
        let spec = self.tasks[idx].spec.clone();
        match spec.behavior {
            Behavior::Interactive => {
                self.tasks[idx].state = State::Blocked {
                    reason: BlockReason::Input,
                    since: self.now,
                };
                let think = self.jitter(idx, spec.wait_ticks);
                self.timers.push(Reverse((self.now + think, Timer::Wake, idx)));
            }
            Behavior::FrameLoop => {
                self.tasks[idx].state = State::Blocked {
                    reason: BlockReason::Frame,
                    since: self.now,
                };
                self.release_frame(idx);
            }
            _ => {
                self.tasks[idx].rem_burst = self.jitter(idx, spec.burst_ticks) * WORK_SCALE;
                self.make_runnable(idx, EnqueueReason::Arrival);
            }
        }
    }

    fn release_frame(&mut self, idx: TaskIdx) {
        let spec = &self.tasks[idx].spec;
        let period = spec.burst_ticks + spec.wait_ticks;
        let deadline = spec.deadline_ticks.unwrap_or(0);
        let t = &mut self.tasks[idx];
        t.seq += 1;
        let seq = t.seq;
        t.frames.push_back((seq, self.now));
        t.next_release = self.now + period;
        if t.next_release < self.horizon {
            self.timers.push(Reverse((t.next_release, Timer::FrameRelease, idx)));
        }
        if self.tasks[idx].frames.len() > FRAME_BACKLOG {
            let (old, release) = self.tasks[idx].frames.pop_front().unwrap_or((seq, self.now));
            self.emit(
                Event::FrameEmit {
                    seq: old,
                    latency_ticks: self.now - release,
                    missed: true,
                },
                Some(idx),
            );
        }
        let t = &mut self.tasks[idx];
        t.deadline = t.frames.front().map(|&(_, r)| r + deadline);
        if matches!(
            t.state,
            State::Blocked {
                reason: BlockReason::Frame,
                ..
            }
        ) {
            self.wake(idx);
        }
    }

    fn preempt_and_dispatch(&mut self) {
        if self.stalled() {
            return;
        }
        for core in 0..self.cores.len() {
            let Some(idx) = self.cores[core].running else { continue };
            let ran = self.cores[core].ran;
            let view = self.view(idx);
            if self.policy.should_preempt(core as u32, &view, ran) {
                self.emit(
                    Event::Preempt {
                        core: core as u32,
                        ran_ticks: ran,
                    },
                    Some(idx),
                );
                self.tasks[idx].acct.preempts += 1;
                self.vacate(core, State::Runnable);
                self.make_runnable(idx, EnqueueReason::Preempt);
            }
        }
        for core in 0..self.cores.len() {
            if self.cores[core].running.is_some() {
                continue;
            }
            let idx = loop {
                match self.policy.pick_next(core as u32, self.now) {
                    Some(i) if self.tasks[i].state == State::Runnable => break Some(i),
                    Some(_) => continue,
                    None => break None,
                }
            };
            let Some(idx) = idx else { continue };
            self.dispatch(core, idx);
        }
    }

    fn dispatch(&mut self, core: usize, idx: TaskIdx) {
        let c = core as u32;
        let migrated = self.tasks[idx].last_core.is_some_and(|l| l != c);
        let cold = migrated || self.cores[core].last_task.is_some_and(|l| l != idx);
        self.emit(
            Event::Dispatch {
                core: c,
                policy: self.active,
                migrated,
            },
            Some(idx),
        );
        self.runnable -= 1;
        let t = &mut self.tasks[idx];
        t.state = State::Running(c);
        t.last_core = Some(c);
        t.acct.dispatches += 1;
        let slot = &mut self.cores[core];
        slot.running = Some(idx);
        slot.ran = 0;
        slot.last_task = Some(idx);
        slot.cold_until = if cold {
            self.now + self.cfg.cache_warmup_ticks
        } else {
            self.now
        };
    }
}

/// Run `scenario` to its horizon under `controller`.
pub fn run_simulation(
    config: &SimConfig,
    scenario: &Scenario,
    controller: &mut dyn PolicyController,
) -> Result<SimRun> {
    let mut engine = Engine::new(config, scenario, controller)?;
    engine.run_to_end(controller)?;
    Ok(engine.into_run())
}

/// Like [`run_simulation`] but restricted to `portfolio`.
pub fn run_with_portfolio(
    config: &SimConfig,
    scenario: &Scenario,
    controller: &mut dyn PolicyController,
    portfolio: &Portfolio,
) -> Result<SimRun> {
    let mut engine = Engine::with_portfolio(config, scenario, controller, portfolio.clone())?;
    engine.run_to_end(controller)?;
    Ok(engine.into_run())
}
