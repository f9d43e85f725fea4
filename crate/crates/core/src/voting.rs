//! Time-weighted probability voting over a sliding window of classifier
//! outputs.
//!
//! Each distribution in the window contributes `p * alpha^(W - t)` to its
//! classes, where `t` is its 1-based position and `W` the window length.
//! Probabilities at or below `theta_vote` contribute nothing. The class with
//! the largest aggregate wins.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::powi;

/// Class probabilities indexed by position in the model's label set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbDist {
    pub probs: Vec<f64>,
    pub timestamp_tick: u64,
}

impl ProbDist {
    pub fn new(probs: Vec<f64>, timestamp_tick: u64) -> Self {
        Self {
            probs,
            timestamp_tick,
        }
    }

    /// Probabilities non-negative and summing to one within `1e-9`.
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.probs.iter().sum();
        if self.probs.is_empty()
            || self.probs.iter().any(|p| !(*p >= 0.0))
            || libm::fabs(sum - 1.0) > 1e-9
        {
            return Err(Error::InvalidVotingParams(
                "probability distribution must be non-negative and sum to 1".into(),
            ));
        }
        Ok(())
    }

    pub fn argmax(&self) -> usize {
        argmax_lowest(&self.probs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// Keep the current class if it is among the tied leaders, otherwise the
    /// lowest class index.
    KeepCurrent,
    LowestClassId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VotingParams {
    pub window: usize,
    pub theta_vote: f64,
    pub alpha: f64,
    pub tie_rule: TieRule,
}

impl Default for VotingParams {
    fn default() -> Self {
        Self {
            window: 6,
            theta_vote: 0.1,
            alpha: 0.8,
            tie_rule: TieRule::KeepCurrent,
        }
    }
}

impl VotingParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidVotingParams("window must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.theta_vote) {
            return Err(Error::InvalidVotingParams("theta_vote must lie in [0, 1)".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidVotingParams("alpha must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Aggregate scores `A_c` for a window. A window shorter than
/// `params.window` is scored as if `W` were its own length.
pub fn aggregate(window: &[ProbDist], params: &VotingParams) -> Result<Vec<f64>> {
    params.validate()?;
    let first = window.first().ok_or(Error::EmptyWindow)?;
    if window.len() > params.window {
        return Err(Error::InvalidVotingParams(alloc::format!(
            "window holds {} distributions, limit is {}",
            window.len(),
            params.window
        )));
    }
    let n = first.probs.len();
    let w = window.len();
    let mut scores = vec![0.0; n];
    for (i, dist) in window.iter().enumerate() {
        if dist.probs.len() != n {
            return Err(Error::ClassCountMismatch {
                expected: n,
                got: dist.probs.len(),
            });
        }
        let weight = powi(params.alpha, (w - 1 - i) as i32);
        for (a, &p) in scores.iter_mut().zip(&dist.probs) {
            if p > params.theta_vote {
                *a += p * weight;
            }
        }
    }
    Ok(scores)
}

fn resolve(scores: &[f64], tie_rule: TieRule, current: Option<usize>) -> usize {
    let best = argmax_lowest(scores);
    match (tie_rule, current) {
        (TieRule::KeepCurrent, Some(c)) if c < scores.len() && scores[c] == scores[best] => c,
        _ => best,
    }
}

pub fn vote(window: &[ProbDist], params: &VotingParams, current: Option<usize>) -> Result<usize> {
    let scores = aggregate(window, params)?;
    Ok(resolve(&scores, params.tie_rule, current))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VotingState {
    pub buffer: VecDeque<ProbDist>,
    pub current_class: Option<usize>,
}

impl VotingState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Push `p` into the ring buffer, vote over it, and remember the winner.
pub fn push_and_vote(state: &mut VotingState, p: ProbDist, params: &VotingParams) -> Result<usize> {
    params.validate()?;
    p.validate()?;
    if let Some(prev) = state.buffer.back() {
        if prev.probs.len() != p.probs.len() {
            return Err(Error::ClassCountMismatch {
                expected: prev.probs.len(),
                got: p.probs.len(),
            });
        }
    }
    state.buffer.push_back(p);
    while state.buffer.len() > params.window {
        state.buffer.pop_front();
    }
    let winner = vote(state.buffer.make_contiguous(), params, state.current_class)?;
    state.current_class = Some(winner);
    Ok(winner)
}
