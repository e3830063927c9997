//! Isolation forest: random axis-aligned splits isolate anomalies in few
//! steps. Score is `2^(-E[h(x)] / c(m))` with `c` the average
//! unsuccessful-BST-search length, computed from exact harmonic numbers
//! so that `c(2) = 1`.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::AnomalyScorer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoForestParams {
    pub n_trees: usize,
    pub subsample: usize,
    pub seed: u64,
}

impl IsoForestParams {
    pub fn new(seed: u64) -> Self {
        IsoForestParams {
            n_trees: 100,
            subsample: 256,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    trees: Vec<Tree>,
    /// c(m) for the per-tree sample size m.
    normalizer: f64,
    /// Exact c(s) lookup for leaf-size adjustments.
    c_table: Vec<f64>,
}

/// Average path length of an unsuccessful search in a BST of n nodes,
/// from exact harmonic numbers: `c(n) = 2 H(n-1) - 2 (n-1) / n`.
pub fn average_path_length(n: usize, harmonics: &[f64]) -> f64 {
    match n {
        0 | 1 => 0.0,
        _ => 2.0 * harmonics[n - 1] - 2.0 * (n - 1) as f64 / n as f64,
    }
}

fn harmonic_table(up_to: usize) -> Vec<f64> {
    let mut h = vec![0.0; up_to + 1];
    for i in 1..=up_to {
        h[i] = h[i - 1] + 1.0 / i as f64;
    }
    h
}

impl IsolationForest {
    pub fn fit(x: ArrayView2<f64>, params: &IsoForestParams) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::TooFewPoints { have: n, need: 2 });
        }
        if params.n_trees == 0 || params.subsample < 2 {
            return Err(Error::InvalidConfig(
                "isolation forest needs n_trees > 0 and subsample >= 2".into(),
            ));
        }
        let sample_size = params.subsample.min(n);
        let height_cap = (sample_size as f64).log2().ceil() as usize;
        let harmonics = harmonic_table(sample_size + 1);
        let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
        let mut trees = Vec::with_capacity(params.n_trees);
        let mut indices: Vec<usize> = (0..n).collect();
        for _ in 0..params.n_trees {
            indices.shuffle(&mut rng);
            let sample = &indices[..sample_size];
            let mut nodes = Vec::new();
            build_node(&x, sample.to_vec(), 0, height_cap, &mut nodes, &mut rng);
            trees.push(Tree { nodes });
        }
        Ok(IsolationForest {
            trees,
            normalizer: average_path_length(sample_size, &harmonics),
            c_table: harmonics
                .iter()
                .enumerate()
                .map(|(i, _)| average_path_length(i, &harmonics))
                .collect(),
        })
    }

    fn path_length(&self, tree: &Tree, x: ArrayView1<f64>) -> f64 {
        let mut node = 0;
        let mut depth = 0usize;
        loop {
            match &tree.nodes[node] {
                Node::Leaf { size } => {
                    return depth as f64 + self.c_table[(*size).min(self.c_table.len() - 1)];
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] < *threshold { *left } else { *right };
                    depth += 1;
                }
            }
        }
    }
}

fn build_node(
    x: &ArrayView2<f64>,
    indices: Vec<usize>,
    depth: usize,
    height_cap: usize,
    nodes: &mut Vec<Node>,
    rng: &mut ChaCha20Rng,
) -> usize {
    let slot = nodes.len();
    if indices.len() <= 1 || depth >= height_cap {
        nodes.push(Node::Leaf {
            size: indices.len(),
        });
        return slot;
    }
    // splittable features: non-degenerate value range in this node
    let dims = x.ncols();
    let mut ranges = Vec::with_capacity(dims);
    for feature in 0..dims {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in &indices {
            let v = x[[*i, feature]];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi > lo {
            ranges.push((feature, lo, hi));
        }
    }
    if ranges.is_empty() {
        nodes.push(Node::Leaf {
            size: indices.len(),
        });
        return slot;
    }
    let (feature, lo, hi) = ranges[rng.gen_range(0..ranges.len())];
    let threshold = rng.gen_range(lo..hi);
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
        indices.into_iter().partition(|i| x[[*i, feature]] < threshold);
    nodes.push(Node::Leaf { size: 0 }); // placeholder, replaced below
    let left = build_node(x, left_idx, depth + 1, height_cap, nodes, rng);
    let right = build_node(x, right_idx, depth + 1, height_cap, nodes, rng);
    nodes[slot] = Node::Split {
        feature,
        threshold,
        left,
        right,
    };
    slot
}

impl AnomalyScorer for IsolationForest {
    fn score(&self, x: ArrayView1<f64>) -> f64 {
        let mean_path: f64 = self
            .trees
            .iter()
            .map(|t| self.path_length(t, x))
            .sum::<f64>()
            / self.trees.len() as f64;
        2f64.powf(-mean_path / self.normalizer)
    }
}
