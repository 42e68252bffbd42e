//! Regression random forest used for per-coefficient regression.
//!
//! CART-style variance-reduction trees on bootstrap resamples, with feature
//! subsampling at every node. Kept minimal: `f64` features, single target.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed_indexed, rng_from_seed, Rng};
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    /// Features tried per split; defaults to `ceil(sqrt(p))`.
    pub mtry: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            min_leaf: 5,
            max_depth: None,
            mtry: None,
        }
    }
}

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    /// `LEAF` marks a leaf; `threshold` then stores the prediction.
    feature: u32,
    threshold: f64,
    left: u32,
    right: u32,
}

#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut idx = 0usize;
        loop {
            let node = &self.nodes[idx];
            if node.feature == LEAF {
                return node.threshold;
            }
            idx = if row[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<Tree>,
}

impl RandomForest {
    pub fn fit(x: &Matrix, y: &[f64], params: &ForestParams, seed: u64) -> Result<Self> {
        let n = x.rows();
        if n == 0 || y.len() != n {
            return Err(Error::Dimension(format!(
                "forest fit: {} rows vs {} targets",
                n,
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("forest targets must be finite".into()));
        }
        let mtry = params
            .mtry
            .unwrap_or_else(|| (x.cols() as f64).sqrt().ceil() as usize)
            .clamp(1, x.cols());
        let trees: Vec<Tree> = (0..params.n_trees.max(1))
            .into_par_iter()
            .map(|t| {
                let mut rng = rng_from_seed(derive_seed_indexed(seed, "tree", t as u64));
                let mut idx: Vec<u32> = (0..n).map(|_| rng.random_range(0..n) as u32).collect();
                let mut builder = TreeBuilder {
                    x,
                    y,
                    min_leaf: params.min_leaf.max(1),
                    max_depth: params.max_depth,
                    mtry,
                    nodes: Vec::new(),
                };
                let len = idx.len();
                builder.build(&mut idx, 0..len, 0, &mut rng);
                Tree { nodes: builder.nodes }
            })
            .collect();
        Ok(RandomForest { trees })
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        s / self.trees.len() as f64
    }
}

struct TreeBuilder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    min_leaf: usize,
    max_depth: Option<usize>,
    mtry: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    /// Builds the subtree on `idx[range]`, returning its node index.
    fn build(&mut self, idx: &mut [u32], range: std::ops::Range<usize>, depth: usize, rng: &mut Rng) -> u32 {
        let slice = range.clone();
        let count = slice.len();
        let sum: f64 = idx[slice.clone()].iter().map(|&i| self.y[i as usize]).sum();
        let mean = sum / count as f64;

        let depth_capped = self.max_depth.is_some_and(|d| depth >= d);
        if count < 2 * self.min_leaf || depth_capped {
            return self.push_leaf(mean);
        }
        let Some((feature, threshold)) = self.best_split(&idx[slice.clone()], rng) else {
            return self.push_leaf(mean);
        };

        // Partition the index range in place.
        let mut mid = range.start;
        for i in range.clone() {
            if self.x.get(idx[i] as usize, feature) <= threshold {
                idx.swap(i, mid);
                mid += 1;
            }
        }
        if mid == range.start || mid == range.end {
            return self.push_leaf(mean);
        }
        let node_id = self.nodes.len() as u32;
        self.nodes.push(Node {
            feature: feature as u32,
            threshold,
            left: 0,
            right: 0,
        });
        let left = self.build(idx, range.start..mid, depth + 1, rng);
        let right = self.build(idx, mid..range.end, depth + 1, rng);
        self.nodes[node_id as usize].left = left;
        self.nodes[node_id as usize].right = right;
        node_id
    }

    fn push_leaf(&mut self, value: f64) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            feature: LEAF,
            threshold: value,
            left: 0,
            right: 0,
        });
        id
    }

    /// Best variance-reduction split over `mtry` random features.
    fn best_split(&self, idx: &[u32], rng: &mut Rng) -> Option<(usize, f64)> {
        let p = self.x.cols();
        // Sample features without replacement.
        let mut features: Vec<usize> = (0..p).collect();
        for i in 0..self.mtry.min(p) {
            let j = rng.random_range(i..p);
            features.swap(i, j);
        }
        let n = idx.len() as f64;
        let total: f64 = idx.iter().map(|&i| self.y[i as usize]).sum();
        let base = total * total / n;

        let mut best: Option<(f64, usize, f64)> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(idx.len());
        for &f in &features[..self.mtry.min(p)] {
            pairs.clear();
            pairs.extend(
                idx.iter()
                    .map(|&i| (self.x.get(i as usize, f), self.y[i as usize])),
            );
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let mut left_sum = 0.0;
            for (k, &(v, y)) in pairs.iter().enumerate().take(pairs.len() - 1) {
                left_sum += y;
                let nl = (k + 1) as f64;
                if k + 1 < self.min_leaf || pairs.len() - k - 1 < self.min_leaf {
                    continue;
                }
                // No split between equal feature values.
                if v == pairs[k + 1].0 {
                    continue;
                }
                let nr = n - nl;
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl + right_sum * right_sum / nr - base;
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, 0.5 * (v + pairs[k + 1].0)));
                }
            }
        }
        best.filter(|&(gain, _, _)| gain > 1e-12)
            .map(|(_, f, thr)| (f, thr))
    }
}
