//! CART decision trees with weighted Gini splits.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::NUM_SLOTS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    /// Sparse class histogram, `(class index, weight)` by ascending class.
    Leaf { hist: Vec<(u32, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_for(&self, x: &[f64; NUM_SLOTS]) -> &[(u32, f64)] {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf { hist } => return hist,
            }
        }
    }

    /// Add this tree's normalized leaf distribution, times `weight`, to `out`.
    pub fn accumulate(&self, x: &[f64; NUM_SLOTS], weight: f64, out: &mut [f64]) {
        let hist = self.leaf_for(x);
        let total: f64 = hist.iter().map(|(_, w)| w).sum();
        for &(c, w) in hist {
            out[c as usize] += weight * w / total;
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Split { left, right, .. } => {
                    1 + go(t, *left as usize).max(go(t, *right as usize))
                }
                Node::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GrowParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per node; all of them when `>= NUM_SLOTS`.
    pub features_per_node: usize,
}

pub struct TrainingSet<'a> {
    pub x: &'a [[f64; NUM_SLOTS]],
    pub y: &'a [u32],
    pub n_classes: usize,
}

struct Best {
    feature: usize,
    threshold: f64,
    score: f64,
    split_at: usize,
}

/// Grow a tree on the rows with positive weight.
pub fn grow(data: &TrainingSet<'_>, weights: &[f64], params: GrowParams, rng: &mut ChaCha8Rng) -> Tree {
    let idx: Vec<usize> = (0..data.y.len()).filter(|&i| weights[i] > 0.0).collect();
    let mut nodes = Vec::new();
    let mut scratch = Vec::with_capacity(idx.len());
    build(data, weights, params, rng, idx, 0, &mut nodes, &mut scratch);
    Tree { nodes }
}

fn histogram(data: &TrainingSet<'_>, weights: &[f64], idx: &[usize]) -> Vec<f64> {
    let mut h = vec![0.0; data.n_classes];
    for &i in idx {
        h[data.y[i] as usize] += weights[i];
    }
    h
}

fn leaf(h: &[f64]) -> Node {
    Node::Leaf {
        hist: h
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(c, &w)| (c as u32, w))
            .collect(),
    }
}

#[allow(clippy::too_many_arguments)]
fn build(
    data: &TrainingSet<'_>,
    weights: &[f64],
    params: GrowParams,
    rng: &mut ChaCha8Rng,
    idx: Vec<usize>,
    depth: usize,
    nodes: &mut Vec<Node>,
    scratch: &mut Vec<(f64, usize)>,
) -> u32 {
    let at = nodes.len() as u32;
    let h = histogram(data, weights, &idx);
    let pure = h.iter().filter(|&&w| w > 0.0).count() <= 1;
    if pure || depth >= params.max_depth || idx.len() < 2 * params.min_leaf {
        nodes.push(leaf(&h));
        return at;
    }
    let features = choose_features(params.features_per_node, rng);
    let Some(best) = best_split(data, weights, &idx, &h, &features, params.min_leaf, scratch) else {
        nodes.push(leaf(&h));
        return at;
    };
    // Re-sort on the winning feature to recover the partition.
    scratch.clear();
    scratch.extend(idx.iter().map(|&i| (data.x[i][best.feature], i)));
    scratch.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let left: Vec<usize> = scratch[..best.split_at].iter().map(|&(_, i)| i).collect();
    let right: Vec<usize> = scratch[best.split_at..].iter().map(|&(_, i)| i).collect();
    drop(idx);
    nodes.push(Node::Leaf { hist: Vec::new() });
    let l = build(data, weights, params, rng, left, depth + 1, nodes, scratch);
    let r = build(data, weights, params, rng, right, depth + 1, nodes, scratch);
    nodes[at as usize] = Node::Split {
        feature: best.feature as u32,
        threshold: best.threshold,
        left: l,
        right: r,
    };
    at
}

/// `k` distinct features in ascending order.
fn choose_features(k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut all: Vec<usize> = (0..NUM_SLOTS).collect();
    if k >= NUM_SLOTS {
        return all;
    }
    for i in 0..k {
        let j = rng.random_range(i..NUM_SLOTS);
        all.swap(i, j);
    }
    all.truncate(k);
    all.sort_unstable();
    all
}

/// Maximizes `S_L / W_L + S_R / W_R` (sum of squared class weights over total
/// weight per side), which is the same as minimizing weighted Gini impurity.
/// Ties keep the earlier feature and the lower threshold. A split with zero
/// gain is still taken when nothing better exists, so patterns like XOR that
/// only pay off one level down can be learned.
fn best_split(
    data: &TrainingSet<'_>,
    weights: &[f64],
    idx: &[usize],
    parent: &[f64],
    features: &[usize],
    min_leaf: usize,
    scratch: &mut Vec<(f64, usize)>,
) -> Option<Best> {
    let total_w: f64 = parent.iter().sum();
    let total_sq: f64 = parent.iter().map(|w| w * w).sum();
    let mut best: Option<Best> = None;
    let mut left = vec![0.0; data.n_classes];
    let n = idx.len();
    for &f in features {
        scratch.clear();
        scratch.extend(idx.iter().map(|&i| (data.x[i][f], i)));
        scratch.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if scratch[0].0 == scratch[n - 1].0 {
            continue;
        }
        left.iter_mut().for_each(|v| *v = 0.0);
        let (mut wl, mut sl) = (0.0, 0.0);
        let mut sr = total_sq;
        for k in 0..n - 1 {
            let (v, i) = scratch[k];
            let c = data.y[i] as usize;
            let w = weights[i];
            let right_c = parent[c] - left[c];
            sl += (left[c] + w) * (left[c] + w) - left[c] * left[c];
            sr += (right_c - w) * (right_c - w) - right_c * right_c;
            left[c] += w;
            wl += w;
            let next = scratch[k + 1].0;
            if v == next || k + 1 < min_leaf || n - k - 1 < min_leaf {
                continue;
            }
            let wr = total_w - wl;
            if wl <= 0.0 || wr <= 0.0 {
                continue;
            }
            let score = sl / wl + sr / wr;
            if best.as_ref().is_none_or(|b| score > b.score) {
                let mid = v + (next - v) / 2.0;
                best = Some(Best {
                    feature: f,
                    threshold: if mid < next { mid } else { v },
                    score,
                    split_at: k + 1,
                });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn pt(a: f64, b: f64) -> [f64; NUM_SLOTS] {
        let mut x = [0.0; NUM_SLOTS];
        x[0] = a;
        x[1] = b;
        x
    }

    fn all_features(depth: usize) -> GrowParams {
        GrowParams {
            max_depth: depth,
            min_leaf: 1,
            features_per_node: NUM_SLOTS,
        }
    }

    #[test]
    fn xor_needs_depth_two() {
        let x = [pt(0.0, 0.0), pt(0.0, 1.0), pt(1.0, 0.0), pt(1.0, 1.0)];
        let y = [0, 1, 1, 0];
        let data = TrainingSet {
            x: &x,
            y: &y,
            n_classes: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = grow(&data, &[1.0; 4], all_features(2), &mut rng);
        assert_eq!(t.depth(), 2);
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(t.leaf_for(xi), &[(yi, 1.0)]);
        }
    }

    #[test]
    fn separable_needs_one_split() {
        let x = [pt(0.0, 5.0), pt(1.0, 3.0), pt(2.0, 9.0), pt(3.0, 1.0)];
        let y = [0, 0, 1, 1];
        let data = TrainingSet {
            x: &x,
            y: &y,
            n_classes: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = grow(&data, &[1.0; 4], all_features(4), &mut rng);
        assert_eq!(t.depth(), 1);
        assert_eq!(
            t.nodes[0],
            Node::Split {
                feature: 0,
                threshold: 1.5,
                left: 1,
                right: 2
            }
        );
    }
}
