//! Labeled feature rows and dataset helpers.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::metrics::{FeatureVector, NUM_SLOTS, SCHEMA_VERSION};
use crate::rng::stream;

/// One feature window with its ground-truth label and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRow {
    pub label: String,
    pub profile_id: String,
    pub scenario_id: String,
    pub policy: String,
    pub seed: u64,
    pub window: u32,
    pub values: [f64; NUM_SLOTS],
}

impl LabeledRow {
    pub fn features(&self) -> FeatureVector {
        FeatureVector {
            schema_version: SCHEMA_VERSION,
            start_tick: 0,
            end_tick: 0,
            values: self.values,
        }
    }
}

fn cmp_values(a: &[f64; NUM_SLOTS], b: &[f64; NUM_SLOTS]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    Ordering::Equal
}

/// Total order on rows by content. Sorting by it makes anything computed
/// from a dataset independent of the order rows arrived in.
pub fn canonical_cmp(a: &LabeledRow, b: &LabeledRow) -> Ordering {
    a.label
        .cmp(&b.label)
        .then_with(|| cmp_values(&a.values, &b.values))
        .then_with(|| a.profile_id.cmp(&b.profile_id))
        .then_with(|| a.scenario_id.cmp(&b.scenario_id))
        .then_with(|| a.policy.cmp(&b.policy))
        .then_with(|| a.seed.cmp(&b.seed))
        .then_with(|| a.window.cmp(&b.window))
}

pub fn canonical_sort(rows: &mut [LabeledRow]) {
    rows.sort_by(canonical_cmp);
}

/// Sorted, de-duplicated labels.
pub fn label_set(rows: &[LabeledRow]) -> Vec<String> {
    let mut labels: Vec<String> = rows.iter().map(|r| r.label.clone()).collect();
    labels.sort();
    labels.dedup();
    labels
}

/// Split into (train, holdout), holding out `frac` of every
/// (label, profile) stratum, rounded to nearest and at least one row when
/// the stratum has two or more.
pub fn stratified_split(
    rows: &[LabeledRow],
    frac: f64,
    seed: u64,
) -> (Vec<LabeledRow>, Vec<LabeledRow>) {
    let mut strata: BTreeMap<(&str, &str), Vec<&LabeledRow>> = BTreeMap::new();
    for r in rows {
        strata
            .entry((r.label.as_str(), r.profile_id.as_str()))
            .or_default()
            .push(r);
    }
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for (i, (_, mut group)) in strata.into_iter().enumerate() {
        group.sort_by(|a, b| canonical_cmp(a, b));
        let mut rng = stream(seed, i as u64);
        group.shuffle(&mut rng);
        let n = group.len();
        let mut k = libm::round(frac * n as f64) as usize;
        if n >= 2 && frac > 0.0 {
            k = k.clamp(1, n - 1);
        }
        for (j, r) in group.into_iter().enumerate() {
            if j < k {
                holdout.push(r.clone());
            } else {
                train.push(r.clone());
            }
        }
    }
    canonical_sort(&mut train);
    canonical_sort(&mut holdout);
    (train, holdout)
}
