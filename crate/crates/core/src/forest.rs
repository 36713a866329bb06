//! Bagged CART regression and probability forests.
//!
//! Trees grow on bootstrap resamples with per-node feature subsampling.
//! All per-node computations run in a canonical (value, target)-sorted
//! order, so fits depend only on the multiset of training rows: permuting
//! the training set while mapping the bootstrap indices accordingly yields
//! bit-identical forests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::RowMat;
use crate::math::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ForestOpts {
    pub n_trees: usize,
    pub min_leaf: usize,
    /// Features tried per node; `None` means `ceil(sqrt(p))`.
    pub mtry: Option<usize>,
    /// `None` grows to purity subject to `min_leaf`.
    pub max_depth: Option<usize>,
}

impl Default for ForestOpts {
    fn default() -> Self {
        ForestOpts { n_trees: 200, min_leaf: 5, mtry: None, max_depth: None }
    }
}

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    feature: u32,
    threshold: f64,
    left: u32,
    right: u32,
    value: f64,
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            let node = &self.nodes[at];
            if node.feature == LEAF {
                return node.value;
            }
            at = if x[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }
}

/// Bagged regression ensemble. Probability forests reuse this with 0/1
/// targets (leaf vote proportions) plus output clipping.
#[derive(Debug, Clone)]
pub struct Forest {
    trees: Vec<Tree>,
    n_features: usize,
}

impl Forest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n_features);
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }
}

/// Probability predictor with clipped output range.
#[derive(Debug, Clone)]
pub struct ProbabilityForest {
    forest: Forest,
    eps: f64,
}

impl ProbabilityForest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.forest.predict(x).clamp(self.eps, 1.0 - self.eps)
    }

    pub fn n_features(&self) -> usize {
        self.forest.n_features()
    }
}

/// Deterministic bootstrap index sets for each tree.
pub fn bootstrap_indices(n: usize, n_trees: usize, seed: u64) -> Vec<Vec<u32>> {
    (0..n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xB007, t as u64));
            (0..n).map(|_| rng.gen_range(0..n) as u32).collect()
        })
        .collect()
}

pub fn fit_regression_forest(
    features: &RowMat,
    targets: &[f64],
    opts: &ForestOpts,
    seed: u64,
) -> Result<Forest> {
    let boots = bootstrap_indices(features.n_rows(), opts.n_trees, seed);
    fit_forest_with_bootstrap(features, targets, &boots, opts, seed)
}

pub fn fit_probability_forest(
    features: &RowMat,
    labels: &[f64],
    opts: &ForestOpts,
    seed: u64,
    eps: f64,
) -> Result<ProbabilityForest> {
    for &l in labels {
        if l != 0.0 && l != 1.0 {
            return Err(Error::validation(format!("non-binary label {l}")));
        }
    }
    let forest = fit_regression_forest(features, labels, opts, seed)?;
    Ok(ProbabilityForest { forest, eps })
}

/// Forest fit with externally supplied bootstrap index sets. The public
/// entry points derive the sets from the seed; tests use this to align
/// bootstraps across row permutations.
pub fn fit_forest_with_bootstrap(
    features: &RowMat,
    targets: &[f64],
    bootstraps: &[Vec<u32>],
    opts: &ForestOpts,
    seed: u64,
) -> Result<Forest> {
    let n = features.n_rows();
    let p = features.n_cols();
    if n == 0 || targets.len() != n {
        return Err(Error::validation(format!(
            "forest fit needs rows: n={n}, targets={}",
            targets.len()
        )));
    }
    if p == 0 {
        return Err(Error::validation("empty feature set"));
    }
    if opts.n_trees == 0 || opts.min_leaf == 0 {
        return Err(Error::validation("n_trees and min_leaf must be positive"));
    }
    let mtry = opts.mtry.unwrap_or_else(|| (p as f64).sqrt().ceil() as usize).clamp(1, p);

    let trees: Vec<Tree> = bootstraps
        .par_iter()
        .enumerate()
        .map(|(t, boot)| {
            let rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x77EE, t as u64));
            let mut builder = TreeBuilder {
                features,
                targets,
                min_leaf: opts.min_leaf,
                max_depth: opts.max_depth,
                mtry,
                rng,
                nodes: Vec::new(),
                feat_scratch: (0..p as u32).collect(),
                pair_scratch: Vec::new(),
                part_scratch: Vec::new(),
            };
            let mut indices = boot.clone();
            builder.grow(&mut indices);
            Tree { nodes: builder.nodes }
        })
        .collect();

    Ok(Forest { trees, n_features: p })
}

struct TreeBuilder<'a> {
    features: &'a RowMat,
    targets: &'a [f64],
    min_leaf: usize,
    max_depth: Option<usize>,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    feat_scratch: Vec<u32>,
    pair_scratch: Vec<(f64, f64)>,
    part_scratch: Vec<u32>,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, indices: &mut [u32]) {
        self.grow_node(indices, 0);
    }

    // Returns the created node id.
    fn grow_node(&mut self, indices: &mut [u32], depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node { feature: LEAF, threshold: 0.0, left: 0, right: 0, value: 0.0 });

        let n = indices.len();
        let stop = n < 2 * self.min_leaf
            || self.max_depth.is_some_and(|d| depth >= d)
            || is_pure(self.targets, indices);
        let split = if stop { None } else { self.best_split(indices) };

        match split {
            None => {
                self.nodes[id as usize].value = canonical_mean(self.targets, indices);
                id
            }
            Some((feature, threshold)) => {
                let features = self.features;
                let split_at = partition_stable(indices, &mut self.part_scratch, |i| {
                    features.row(i as usize)[feature as usize] <= threshold
                });
                let (left_idx, right_idx) = indices.split_at_mut(split_at);
                // Children are built left first; recursion depth is bounded
                // by the tree depth which is fine at these sample sizes.
                let left = self.grow_node(left_idx, depth + 1);
                let right = self.grow_node(right_idx, depth + 1);
                let node = &mut self.nodes[id as usize];
                node.feature = feature;
                node.threshold = threshold;
                node.left = left;
                node.right = right;
                id
            }
        }
    }

    /// Best (feature, threshold) by variance reduction over an mtry feature
    /// sample, or None when no admissible split exists.
    fn best_split(&mut self, indices: &[u32]) -> Option<(u32, f64)> {
        let n = indices.len();
        let nf = n as f64;

        // Partial Fisher-Yates for the feature sample.
        let p = self.feat_scratch.len();
        for k in 0..self.mtry.min(p) {
            let j = self.rng.gen_range(k..p);
            self.feat_scratch.swap(k, j);
        }

        let mut best: Option<(f64, u32, f64)> = None;
        for fi in 0..self.mtry.min(p) {
            let feature = self.feat_scratch[fi];
            self.pair_scratch.clear();
            for &i in indices {
                self.pair_scratch.push((
                    self.features.row(i as usize)[feature as usize],
                    self.targets[i as usize],
                ));
            }
            self.pair_scratch
                .sort_unstable_by(|a, b| a.partial_cmp(b).expect("non-finite feature/target"));

            let total: f64 = self.pair_scratch.iter().map(|&(_, t)| t).sum();
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.pair_scratch[k].1;
                let n_left = k + 1;
                if n_left < self.min_leaf {
                    continue;
                }
                if n - n_left < self.min_leaf {
                    break;
                }
                let (v, v_next) = (self.pair_scratch[k].0, self.pair_scratch[k + 1].0);
                if v == v_next {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / n_left as f64
                    + right_sum * right_sum / (n - n_left) as f64
                    - total * total / nf;
                if gain > 1e-14 && best.map_or(true, |(g, _, _)| gain > g) {
                    best = Some((gain, feature, 0.5 * (v + v_next)));
                }
            }
        }
        best.map(|(_, f, thr)| (f, thr))
    }
}

// Mean over the index multiset, accumulated in sorted order so the result
// does not depend on row ordering.
fn canonical_mean(targets: &[f64], indices: &[u32]) -> f64 {
    let mut vals: Vec<f64> = indices.iter().map(|&i| targets[i as usize]).collect();
    vals.sort_unstable_by(|a, b| a.partial_cmp(b).expect("non-finite target"));
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn is_pure(targets: &[f64], indices: &[u32]) -> bool {
    let first = targets[indices[0] as usize];
    indices.iter().all(|&i| targets[i as usize] == first)
}

// Stable partition: keeps relative order inside both halves, returns the
// split point.
fn partition_stable(
    indices: &mut [u32],
    scratch: &mut Vec<u32>,
    mut pred: impl FnMut(u32) -> bool,
) -> usize {
    scratch.clear();
    let mut write = 0usize;
    for k in 0..indices.len() {
        let v = indices[k];
        if pred(v) {
            indices[write] = v;
            write += 1;
        } else {
            scratch.push(v);
        }
    }
    indices[write..].copy_from_slice(scratch);
    write
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: Vec<Vec<f64>>) -> RowMat {
        RowMat::from_rows(rows).unwrap()
    }

    #[test]
    fn constant_target_predicts_constant() {
        let x = mat((0..40).map(|i| vec![i as f64, (i * 7 % 11) as f64]).collect());
        let y = vec![3.25; 40];
        let f = fit_regression_forest(&x, &y, &ForestOpts::default(), 1).unwrap();
        for i in 0..40 {
            assert_eq!(f.predict(x.row(i)), 3.25);
        }
        assert_eq!(f.predict(&[1000.0, -5.0]), 3.25);
    }

    #[test]
    fn duplicated_single_row_predicts_its_target() {
        let x = mat(vec![vec![0.4, -1.0]; 50]);
        let y = vec![7.0; 50];
        let f = fit_regression_forest(&x, &y, &ForestOpts::default(), 2).unwrap();
        assert_eq!(f.predict(&[0.4, -1.0]), 7.0);
        assert_eq!(f.predict(&[9.9, 9.9]), 7.0);
    }

    #[test]
    fn learns_identity_function() {
        // y = x1 on uniform points; held-out MSE well under 0.02 * Var(y).
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 2000;
        let xs: Vec<Vec<f64>> =
            (0..n).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let y: Vec<f64> = xs.iter().map(|r| r[0]).collect();
        let x = mat(xs);
        let f = fit_regression_forest(&x, &y, &ForestOpts::default(), 3).unwrap();
        let mut mse = 0.0;
        let grid: Vec<f64> = (0..100).map(|k| -0.95 + 1.9 * k as f64 / 99.0).collect();
        for &g in &grid {
            let pred = f.predict(&[g, 0.0]);
            mse += (pred - g) * (pred - g);
        }
        mse /= grid.len() as f64;
        let var_y = 1.0 / 3.0; // Var of Unif(-1,1)
        assert!(mse <= 0.02 * var_y, "held-out mse {mse}");
    }

    #[test]
    fn probability_forest_clips_and_calibrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 2000;
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
        // labels independent of features
        let labels: Vec<f64> =
            (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let x = mat(xs);
        let f = fit_probability_forest(&x, &labels, &ForestOpts::default(), 5, 0.01).unwrap();
        let mean_pred: f64 =
            (0..40).map(|k| f.predict(&[-0.975 + 0.05 * k as f64])).sum::<f64>() / 40.0;
        assert!((mean_pred - 0.5).abs() < 0.05, "mean prediction {mean_pred}");

        // all-ones labels clip at 1 - eps
        let ones = vec![1.0; 100];
        let x1 = mat((0..100).map(|i| vec![i as f64]).collect());
        let f1 = fit_probability_forest(&x1, &ones, &ForestOpts::default(), 6, 0.01).unwrap();
        assert_eq!(f1.predict(&[3.0]), 0.99);
    }

    #[test]
    fn permutation_invariant_with_aligned_bootstrap() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 300;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let y: Vec<f64> =
            rows.iter().map(|r| r[0] * 2.0 + r[1] + 0.1 * (r[0] * 9.0).sin()).collect();

        let opts = ForestOpts { n_trees: 25, ..Default::default() };
        let boots = bootstrap_indices(n, opts.n_trees, 9);
        let x = mat(rows.clone());
        let f_base = fit_forest_with_bootstrap(&x, &y, &boots, &opts, 9).unwrap();

        for shuffle_seed in [101u64, 202] {
            let mut perm: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            let mut prng = ChaCha8Rng::seed_from_u64(shuffle_seed);
            perm.shuffle(&mut prng);
            // position of original row i in the permuted data
            let mut pos = vec![0usize; n];
            for (new_pos, &orig) in perm.iter().enumerate() {
                pos[orig] = new_pos;
            }
            let rows_p: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
            let y_p: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
            let boots_p: Vec<Vec<u32>> = boots
                .iter()
                .map(|b| b.iter().map(|&i| pos[i as usize] as u32).collect())
                .collect();
            let xp = mat(rows_p);
            let f_perm = fit_forest_with_bootstrap(&xp, &y_p, &boots_p, &opts, 9).unwrap();
            for probe in 0..50 {
                let q = [(probe as f64) / 25.0 - 1.0, ((probe * 13 % 50) as f64) / 25.0 - 1.0];
                assert_eq!(f_base.predict(&q), f_perm.predict(&q), "probe {probe}");
            }
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let n = 120;
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] - r[1]).collect();
        let x = mat(rows);
        let opts = ForestOpts { n_trees: 30, ..Default::default() };
        let a = fit_regression_forest(&x, &y, &opts, 77).unwrap();
        let b = fit_regression_forest(&x, &y, &opts, 77).unwrap();
        let c = fit_regression_forest(&x, &y, &opts, 78).unwrap();
        let probe = [0.3, 0.6];
        assert_eq!(a.predict(&probe), b.predict(&probe));
        assert_ne!(a.predict(&probe), c.predict(&probe));
    }

    #[test]
    fn rejects_empty_inputs() {
        let x = RowMat::from_rows(vec![]).unwrap();
        assert!(fit_regression_forest(&x, &[], &ForestOpts::default(), 0).is_err());
    }
}
