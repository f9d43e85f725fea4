//! Workload classifier: a bagged forest of CART trees over feature windows.
//!
//! Fine-tuning appends a small boosted layer of trees fit to the rows the
//! current model gets wrong, with one shared weight picked by accuracy on
//! the new rows. The layer is dropped when no weight helps, so fine-tuning
//! never lowers accuracy on the rows it was given; the attempt is still
//! recorded in the model's lineage.

pub mod dataset;
pub mod tree;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use dataset::{canonical_sort, label_set, stratified_split, LabeledRow};
pub use tree::{Node, Tree};

use crate::digest::checksum;
use crate::error::{Error, Result};
use crate::exec::{Executor, Sequential};
use crate::metrics::{FeatureVector, NUM_SLOTS, SCHEMA_VERSION};
use crate::rng::{derive_seed, stream};
use crate::voting::ProbDist;
use tree::{grow, GrowParams, TrainingSet};

const FINE_TUNE_STREAM: u64 = 0xF1E7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubsample {
    Sqrt,
    All,
    Count(usize),
}

impl FeatureSubsample {
    fn per_node(self) -> usize {
        match self {
            Self::Sqrt => (libm::sqrt(NUM_SLOTS as f64) as usize).max(1),
            Self::All => NUM_SLOTS,
            Self::Count(n) => n.clamp(1, NUM_SLOTS),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub feature_subsample: FeatureSubsample,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            n_trees: 64,
            max_depth: 12,
            min_leaf: 3,
            feature_subsample: FeatureSubsample::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FineTuneParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Extra row weight per unit of probability the model puts off the
    /// true class.
    pub emphasis: f64,
    /// Candidate layer weights, as multiples of the model's current total
    /// tree weight.
    pub weight_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for FineTuneParams {
    fn default() -> Self {
        Self {
            n_trees: 16,
            max_depth: 12,
            min_leaf: 1,
            emphasis: 4.0,
            weight_grid: vec![0.125, 0.25, 0.5, 1.0, 2.0, 4.0],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub weight: f64,
    pub tree: Tree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageEntry {
    pub kind: String,
    pub dataset_checksum: String,
    pub rows: usize,
    pub trees_added: usize,
    pub layer_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub hyperparams: Hyperparams,
    pub dataset_checksum: String,
    pub rows: usize,
    pub oob_accuracy: Option<f64>,
    pub lineage: Vec<LineageEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub schema_version: u32,
    pub label_set: Vec<String>,
    pub trees: Vec<Member>,
    pub training_meta: TrainingMeta,
}

fn degenerate(msg: String) -> Error {
    Error::DegenerateDataset(msg)
}

struct Encoded {
    x: Vec<[f64; NUM_SLOTS]>,
    y: Vec<u32>,
}

fn encode(rows: &[LabeledRow], labels: &[String]) -> Result<Encoded> {
    let mut x = Vec::with_capacity(rows.len());
    let mut y = Vec::with_capacity(rows.len());
    for r in rows {
        let c = labels
            .binary_search(&r.label)
            .map_err(|_| degenerate(format!("label `{}` is not in the model's label set", r.label)))?;
        if r.values.iter().any(|v| !v.is_finite()) {
            return Err(degenerate(format!("non-finite feature in a `{}` row", r.label)));
        }
        x.push(r.values);
        y.push(c as u32);
    }
    Ok(Encoded { x, y })
}

fn bootstrap_weights<R: Rng>(n: usize, bootstrap: bool, base: &[f64], rng: &mut R) -> Vec<f64> {
    if !bootstrap {
        return base.to_vec();
    }
    let mut counts = vec![0.0; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1.0;
    }
    counts.iter().zip(base).map(|(c, b)| c * b).collect()
}

pub fn train(rows: &[LabeledRow], hp: &Hyperparams) -> Result<ForestModel> {
    train_with(rows, hp, &Sequential)
}

/// Trees are grown independently (one seeded stream per tree index) and
/// collected in index order, so any executor gives the same model.
pub fn train_with<E: Executor>(rows: &[LabeledRow], hp: &Hyperparams, exec: &E) -> Result<ForestModel> {
    if hp.n_trees == 0 || hp.max_depth == 0 || hp.min_leaf == 0 {
        return Err(Error::InvalidConfig(
            "n_trees, max_depth and min_leaf must be positive".into(),
        ));
    }
    let mut rows = rows.to_vec();
    canonical_sort(&mut rows);
    let labels = label_set(&rows);
    if labels.len() < 2 {
        return Err(degenerate(format!("{} distinct label(s), need at least 2", labels.len())));
    }
    for l in &labels {
        let n = rows.iter().filter(|r| &r.label == l).count();
        if n < hp.min_leaf {
            return Err(degenerate(format!("class `{l}` has {n} rows, min_leaf is {}", hp.min_leaf)));
        }
    }
    let enc = encode(&rows, &labels)?;
    let data = TrainingSet {
        x: &enc.x,
        y: &enc.y,
        n_classes: labels.len(),
    };
    let n = rows.len();
    let unit = vec![1.0; n];
    let grow_params = GrowParams {
        max_depth: hp.max_depth,
        min_leaf: hp.min_leaf,
        features_per_node: hp.feature_subsample.per_node(),
    };
    let grown: Vec<(Tree, Vec<f64>)> = exec.run_all(hp.n_trees, |t| {
        let mut rng = stream(hp.seed, t as u64);
        let w = bootstrap_weights(n, hp.bootstrap, &unit, &mut rng);
        (grow(&data, &w, grow_params, &mut rng), w)
    });

    let oob_accuracy = hp.bootstrap.then(|| {
        let mut correct = 0usize;
        let mut seen = 0usize;
        let mut acc = vec![0.0; labels.len()];
        for i in 0..n {
            acc.iter_mut().for_each(|v| *v = 0.0);
            let mut any = false;
            for (tree, w) in &grown {
                if w[i] == 0.0 {
                    tree.accumulate(&enc.x[i], 1.0, &mut acc);
                    any = true;
                }
            }
            if any {
                seen += 1;
                if argmax(&acc) == enc.y[i] as usize {
                    correct += 1;
                }
            }
        }
        if seen == 0 {
            0.0
        } else {
            correct as f64 / seen as f64
        }
    });

    let dataset_checksum = checksum(&rows);
    Ok(ForestModel {
        schema_version: SCHEMA_VERSION,
        label_set: labels,
        trees: grown
            .into_iter()
            .map(|(tree, _)| Member { weight: 1.0, tree })
            .collect(),
        training_meta: TrainingMeta {
            seed: hp.seed,
            hyperparams: *hp,
            dataset_checksum: dataset_checksum.clone(),
            rows: n,
            oob_accuracy,
            lineage: vec![LineageEntry {
                kind: "train".into(),
                dataset_checksum,
                rows: n,
                trees_added: hp.n_trees,
                layer_weight: 1.0,
            }],
        },
    })
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..xs.len() {
        if xs[i] > xs[best] {
            best = i;
        }
    }
    best
}

impl ForestModel {
    pub fn n_classes(&self) -> usize {
        self.label_set.len()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.label_set.iter().position(|l| l == label)
    }

    /// Check structural invariants, e.g. after loading from a file.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaMismatch {
                expected: SCHEMA_VERSION,
                found: self.schema_version,
            });
        }
        if self.label_set.len() < 2 || self.label_set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(degenerate("label set must be sorted, unique, and hold 2+ labels".into()));
        }
        if self.trees.is_empty() {
            return Err(degenerate("model has no trees".into()));
        }
        for m in &self.trees {
            if !(m.weight > 0.0) || m.tree.nodes.is_empty() {
                return Err(degenerate("tree with empty body or non-positive weight".into()));
            }
            let len = m.tree.nodes.len() as u32;
            for node in &m.tree.nodes {
                match node {
                    Node::Split {
                        feature,
                        left,
                        right,
                        threshold,
                    } => {
                        if *feature as usize >= NUM_SLOTS || *left >= len || *right >= len || !threshold.is_finite() {
                            return Err(degenerate("split references an invalid slot or node".into()));
                        }
                    }
                    Node::Leaf { hist } => {
                        if hist.is_empty()
                            || hist
                                .iter()
                                .any(|&(c, w)| c as usize >= self.label_set.len() || !(w > 0.0))
                        {
                            return Err(degenerate("empty or invalid leaf histogram".into()));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Weighted mean of normalized leaf distributions.
    pub fn predict_values(&self, x: &[f64; NUM_SLOTS]) -> Vec<f64> {
        let mut out = vec![0.0; self.label_set.len()];
        let mut total = 0.0;
        for m in &self.trees {
            m.tree.accumulate(x, m.weight, &mut out);
            total += m.weight;
        }
        out.iter_mut().for_each(|v| *v /= total);
        out
    }

    pub fn predict_label(&self, x: &[f64; NUM_SLOTS]) -> &str {
        &self.label_set[argmax(&self.predict_values(x))]
    }

    pub fn checksum(&self) -> String {
        checksum(self)
    }
}

pub fn predict_proba(model: &ForestModel, x: &FeatureVector) -> Result<ProbDist> {
    if x.schema_version != model.schema_version {
        return Err(Error::SchemaMismatch {
            expected: model.schema_version,
            found: x.schema_version,
        });
    }
    Ok(ProbDist::new(model.predict_values(&x.values), x.end_tick))
}

/// Fraction of rows whose argmax class is the row's label. Labels the model
/// does not know count as misses.
pub fn accuracy(model: &ForestModel, rows: &[LabeledRow]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let hits = rows
        .iter()
        .filter(|r| model.predict_label(&r.values) == r.label)
        .count();
    hits as f64 / rows.len() as f64
}

/// Mean probability assigned to the true class.
pub fn mean_true_probability(model: &ForestModel, rows: &[LabeledRow]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let sum: f64 = rows
        .iter()
        .map(|r| match model.class_index(&r.label) {
            Some(c) => model.predict_values(&r.values)[c],
            None => 0.0,
        })
        .sum();
    sum / rows.len() as f64
}

pub fn fine_tune(model: &ForestModel, new_rows: &[LabeledRow], ft: &FineTuneParams) -> Result<ForestModel> {
    fine_tune_with(model, new_rows, ft, &Sequential)
}

pub fn fine_tune_with<E: Executor>(
    model: &ForestModel,
    new_rows: &[LabeledRow],
    ft: &FineTuneParams,
    exec: &E,
) -> Result<ForestModel> {
    if model.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaMismatch {
            expected: SCHEMA_VERSION,
            found: model.schema_version,
        });
    }
    if new_rows.is_empty() || ft.n_trees == 0 {
        return Ok(model.clone());
    }
    let mut rows = new_rows.to_vec();
    canonical_sort(&mut rows);
    let enc = encode(&rows, &model.label_set)?;
    let n = rows.len();

    let base_probs: Vec<Vec<f64>> = enc.x.iter().map(|x| model.predict_values(x)).collect();
    let base_weight: f64 = model.trees.iter().map(|m| m.weight).sum();
    let row_weight: Vec<f64> = base_probs
        .iter()
        .zip(&enc.y)
        .map(|(p, &y)| 1.0 + ft.emphasis * (1.0 - p[y as usize]))
        .collect();

    let data = TrainingSet {
        x: &enc.x,
        y: &enc.y,
        n_classes: model.label_set.len(),
    };
    let grow_params = GrowParams {
        max_depth: ft.max_depth.max(1),
        min_leaf: ft.min_leaf.max(1),
        features_per_node: FeatureSubsample::Sqrt.per_node(),
    };
    let root = derive_seed(ft.seed, FINE_TUNE_STREAM + model.training_meta.lineage.len() as u64);
    let layer: Vec<Tree> = exec.run_all(ft.n_trees, |t| {
        let mut rng = stream(root, t as u64);
        let w = bootstrap_weights(n, true, &row_weight, &mut rng);
        grow(&data, &w, grow_params, &mut rng)
    });
    let layer_probs: Vec<Vec<f64>> = enc
        .x
        .iter()
        .map(|x| {
            let mut out = vec![0.0; model.label_set.len()];
            for t in &layer {
                t.accumulate(x, 1.0 / ft.n_trees as f64, &mut out);
            }
            out
        })
        .collect();

    let count_hits = |lw: f64| {
        (0..n)
            .filter(|&i| {
                let mixed: Vec<f64> = base_probs[i]
                    .iter()
                    .zip(&layer_probs[i])
                    .map(|(b, l)| b * base_weight + l * lw)
                    .collect();
                argmax(&mixed) == enc.y[i] as usize
            })
            .count()
    };
    let before = count_hits(0.0);
    let mut best: Option<(usize, f64)> = None;
    for &g in &ft.weight_grid {
        if !(g > 0.0) {
            continue;
        }
        let lw = g * base_weight;
        let hits = count_hits(lw);
        if hits > before && best.is_none_or(|(h, _)| hits > h) {
            best = Some((hits, lw));
        }
    }
    let mut out = model.clone();
    let Some((_, layer_weight)) = best else {
        out.training_meta.lineage.push(LineageEntry {
            kind: "fine_tune".into(),
            dataset_checksum: checksum(&rows),
            rows: n,
            trees_added: 0,
            layer_weight: 0.0,
        });
        return Ok(out);
    };
    let per_tree = layer_weight / ft.n_trees as f64;
    out.trees
        .extend(layer.into_iter().map(|tree| Member { weight: per_tree, tree }));
    out.training_meta.lineage.push(LineageEntry {
        kind: "fine_tune".into(),
        dataset_checksum: checksum(&rows),
        rows: n,
        trees_added: ft.n_trees,
        layer_weight,
    });
    Ok(out)
}

#[cfg(test)]
mod tests;
