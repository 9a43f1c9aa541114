//! Regression forest: bagged variance-minimizing trees with mean
//! aggregation.
//!
//! Trees are grown independently from per-tree seeds fixed up front, so
//! fitting may run in parallel without changing the result. Split search
//! scans midpoints between consecutive distinct sorted feature values and
//! keeps the split with the largest variance reduction; ties go to the
//! lower feature index, then the lower threshold.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::util::derive_seed;

/// How many candidate features each split considers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Fraction(f64),
}

/// Forest hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            max_features: MaxFeatures::All,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::InvalidParam("n_trees must be >= 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::InvalidParam("min_samples_split must be >= 2".into()));
        }
        if let MaxFeatures::Fraction(f) = self.max_features {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidParam(format!(
                    "max_features fraction {f} must be in (0, 1]"
                )));
            }
        }
        Ok(())
    }

    fn features_per_split(&self, d: usize) -> usize {
        match self.max_features {
            MaxFeatures::All => d,
            MaxFeatures::Sqrt => ((d as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::Fraction(f) => ((f * d as f64).floor() as usize).clamp(1, d),
        }
    }
}

/// One node of a flattened regression tree. The root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A single CART regression tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    /// Leaf value reached by `x` (rows with `x[feature] <= threshold` go left).
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Row/feature counts and seed the forest was fitted with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingFingerprint {
    pub n_rows: usize,
    pub n_features: usize,
    pub seed: u64,
}

/// Fitted regression forest; prediction is the mean over trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<RegressionTree>,
    pub params: ForestParams,
    pub fingerprint: TrainingFingerprint,
}

impl Forest {
    pub fn n_features(&self) -> usize {
        self.fingerprint.n_features
    }

    /// Mean over trees of the leaf value reached by `x`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.fingerprint.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.fingerprint.n_features,
                got: x.len(),
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    /// Predict every row of a matrix.
    pub fn predict_rows(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.rows_iter().map(|row| self.predict(row)).collect()
    }
}

/// See [`Forest::predict`]; free-function form.
pub fn predict_mean(forest: &Forest, x: &[f64]) -> Result<f64> {
    forest.predict(x)
}

/// Fit a regression forest.
///
/// Each tree grows on a bootstrap resample (or the full data when
/// `bootstrap` is off) from a seed derived from `params.seed` and the
/// tree index. Nodes with fewer than `min_samples_split` samples or zero
/// target variance become leaves holding the mean target.
pub fn fit_forest(x: &Matrix, y: &[f64], params: &ForestParams) -> Result<Forest> {
    params.validate()?;
    if x.n_rows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if x.n_rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.n_rows(),
            right: y.len(),
        });
    }
    if !x.all_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }

    let seeds: Vec<u64> = (0..params.n_trees)
        .map(|t| derive_seed(params.seed, t as u64))
        .collect();
    let trees: Vec<RegressionTree> = seeds
        .par_iter()
        .map(|&tree_seed| grow_tree(x, y, params, tree_seed))
        .collect();

    Ok(Forest {
        trees,
        params: params.clone(),
        fingerprint: TrainingFingerprint {
            n_rows: x.n_rows(),
            n_features: x.n_cols(),
            seed: params.seed,
        },
    })
}

fn grow_tree(x: &Matrix, y: &[f64], params: &ForestParams, tree_seed: u64) -> RegressionTree {
    let n = x.n_rows();
    let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
    let samples: Vec<usize> = if params.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };

    let mut builder = TreeBuilder {
        x,
        y,
        params,
        rng,
        nodes: Vec::new(),
    };
    builder.build(samples, 0);
    RegressionTree {
        nodes: builder.nodes,
    }
}

struct TreeBuilder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    params: &'a ForestParams,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl TreeBuilder<'_> {
    /// Append the subtree for `samples` and return its root index.
    fn build(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let (mean, sse) = mean_and_sse(self.y, &samples);

        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        let splittable = depth_ok
            && samples.len() >= self.params.min_samples_split
            && sse > sse_floor(self.y, &samples);

        if !splittable {
            return self.push(TreeNode::Leaf { value: mean });
        }
        match self.best_split(&samples) {
            Some(split) => {
                let idx = self.push(TreeNode::Leaf { value: mean });
                let left = self.build(split.left, depth + 1);
                let right = self.build(split.right, depth + 1);
                self.nodes[idx] = TreeNode::Split {
                    feature: split.feature,
                    threshold: split.threshold,
                    left,
                    right,
                };
                idx
            }
            None => self.push(TreeNode::Leaf { value: mean }),
        }
    }

    fn push(&mut self, node: TreeNode) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    /// Candidate features for one split, ascending.
    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.n_cols();
        let k = self.params.features_per_split(d);
        if k >= d {
            return (0..d).collect();
        }
        let mut all: Vec<usize> = (0..d).collect();
        all.shuffle(&mut self.rng);
        let mut chosen = all[..k].to_vec();
        chosen.sort_unstable();
        chosen
    }

    /// Lowest total child SSE over all candidate (feature, midpoint)
    /// pairs; strict comparisons keep the first best, which realizes the
    /// lower-feature-then-lower-threshold tie rule.
    fn best_split(&mut self, samples: &[usize]) -> Option<BestSplit> {
        let features = self.candidate_features();
        let n = samples.len();
        let mut best: Option<BestSplit> = None;

        let mut order: Vec<usize> = Vec::with_capacity(n);
        for &feature in &features {
            order.clear();
            order.extend_from_slice(samples);
            order.sort_by(|&a, &b| {
                self.x
                    .get(a, feature)
                    .partial_cmp(&self.x.get(b, feature))
                    .expect("finite feature values")
            });

            // Prefix sums over the sorted order.
            let total_sum: f64 = order.iter().map(|&i| self.y[i]).sum();
            let total_sq: f64 = order.iter().map(|&i| self.y[i] * self.y[i]).sum();
            let mut left_sum = 0.0;
            let mut left_sq = 0.0;

            for cut in 1..n {
                let prev = order[cut - 1];
                let here = order[cut];
                left_sum += self.y[prev];
                left_sq += self.y[prev] * self.y[prev];

                let v_prev = self.x.get(prev, feature);
                let v_here = self.x.get(here, feature);
                if v_prev == v_here {
                    continue;
                }
                let n_left = cut as f64;
                let n_right = (n - cut) as f64;
                let sse_left = left_sq - left_sum * left_sum / n_left;
                let right_sum = total_sum - left_sum;
                let sse_right = (total_sq - left_sq) - right_sum * right_sum / n_right;
                let score = sse_left.max(0.0) + sse_right.max(0.0);

                if best.as_ref().is_none_or(|b| score < b.score) {
                    best = Some(BestSplit {
                        feature,
                        threshold: v_prev + (v_here - v_prev) / 2.0,
                        score,
                        left: order[..cut].to_vec(),
                        right: order[cut..].to_vec(),
                    });
                }
            }
        }
        best
    }
}

fn mean_and_sse(y: &[f64], samples: &[usize]) -> (f64, f64) {
    let n = samples.len() as f64;
    let sum: f64 = samples.iter().map(|&i| y[i]).sum();
    let mean = sum / n;
    let sse: f64 = samples.iter().map(|&i| (y[i] - mean) * (y[i] - mean)).sum();
    (mean, sse)
}

/// Tolerance below which a node's target spread counts as zero variance.
fn sse_floor(y: &[f64], samples: &[usize]) -> f64 {
    let scale: f64 = samples
        .iter()
        .map(|&i| y[i] * y[i])
        .fold(0.0, f64::max)
        .max(1.0);
    scale * 1e-12 * samples.len() as f64
}
