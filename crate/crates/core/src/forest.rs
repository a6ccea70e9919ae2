//! Weighted honest causal forest estimating tau(x) = E[Y(1) - Y(0) | X = x]
//! from randomized-trial rows.
//!
//! Double-sample honesty: each tree draws a subsample, splits it into a
//! split-search half and an estimation half, grows greedily on the split
//! half with the heterogeneity criterion n_L*n_R/(n_L+n_R)^2 * (tau_L -
//! tau_R)^2, and fills leaf statistics from the estimation half only.
//! Leaves missing a treatment arm in the estimation half are merged upward
//! into their parent. Observation weights enter every weighted sum; all
//! split decisions and leaf estimates are ratios of weighted sums, so
//! rescaling the weight vector leaves the fit unchanged.

use rand::seq::index::sample as index_sample;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub num_trees: usize,
    pub subsample_fraction: f64,
    pub honesty_fraction: f64,
    /// Candidate features per split; defaults to ceil(sqrt(p)).
    pub mtry: Option<usize>,
    pub min_leaf_treated: usize,
    pub min_leaf_control: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            num_trees: 500,
            subsample_fraction: 0.5,
            honesty_fraction: 0.5,
            mtry: None,
            min_leaf_treated: 5,
            min_leaf_control: 5,
            max_depth: None,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_trees < 1 {
            return Err(Error::InvalidConfig("num_trees must be >= 1".into()));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::InvalidConfig(
                "subsample_fraction must lie in (0, 1]".into(),
            ));
        }
        if !(self.honesty_fraction > 0.0 && self.honesty_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "honesty_fraction must lie in (0, 1)".into(),
            ));
        }
        if self.min_leaf_treated < 1 || self.min_leaf_control < 1 {
            return Err(Error::InvalidConfig("min leaf counts must be >= 1".into()));
        }
        Ok(())
    }

    fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)
            .clamp(1, p)
    }
}

/// Weighted estimation-sample statistics of one leaf.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LeafStats {
    pub sum_w_treated: f64,
    pub sum_w_control: f64,
    pub sum_wy_treated: f64,
    pub sum_wy_control: f64,
    pub n_treated: u32,
    pub n_control: u32,
}

impl LeafStats {
    fn add(&mut self, treated: bool, w: f64, y: f64) {
        if treated {
            self.sum_w_treated += w;
            self.sum_wy_treated += w * y;
            self.n_treated += 1;
        } else {
            self.sum_w_control += w;
            self.sum_wy_control += w * y;
            self.n_control += 1;
        }
    }

    fn merge(&self, other: &LeafStats) -> LeafStats {
        LeafStats {
            sum_w_treated: self.sum_w_treated + other.sum_w_treated,
            sum_w_control: self.sum_w_control + other.sum_w_control,
            sum_wy_treated: self.sum_wy_treated + other.sum_wy_treated,
            sum_wy_control: self.sum_wy_control + other.sum_wy_control,
            n_treated: self.n_treated + other.n_treated,
            n_control: self.n_control + other.n_control,
        }
    }

    fn has_both_arms(&self) -> bool {
        self.n_treated > 0 && self.n_control > 0
    }

    pub fn tau(&self) -> f64 {
        self.sum_wy_treated / self.sum_w_treated - self.sum_wy_control / self.sum_w_control
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        tau: f64,
        stats: LeafStats,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CausalTree {
    pub nodes: Vec<Node>,
    /// Original row indices of the split-search half.
    pub split_indices: Vec<u32>,
    /// Original row indices of the estimation half.
    pub est_indices: Vec<u32>,
}

impl CausalTree {
    /// tau of the leaf containing `row` (walks from the root).
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if row[*feature as usize] < *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf { tau, .. } => return *tau,
            }
        }
    }

    /// (feature, threshold) of every internal node, preorder.
    pub fn splits(&self) -> Vec<(usize, f64)> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split {
                    feature, threshold, ..
                } => Some((*feature as usize, *threshold)),
                Node::Leaf { .. } => None,
            })
            .collect()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &LeafStats> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { stats, .. } => Some(stats),
            Node::Split { .. } => None,
        })
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CausalForestModel {
    pub format_version: u32,
    pub n_features: usize,
    pub trees: Vec<CausalTree>,
}

struct TrainData<'a> {
    features: &'a Matrix,
    treated: Vec<bool>,
    outcome: &'a [f64],
    weights: Vec<f64>, // normalized to sum one
}

enum TempNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TempNode>,
        right: Box<TempNode>,
        agg: LeafStats,
    },
    Leaf(LeafStats),
}

impl TempNode {
    fn aggregate(&self) -> LeafStats {
        match self {
            TempNode::Split { agg, .. } => *agg,
            TempNode::Leaf(stats) => *stats,
        }
    }
}

#[derive(Clone, Copy, Default)]
struct ArmSums {
    w_t: f64,
    w_c: f64,
    wy_t: f64,
    wy_c: f64,
    n_t: u32,
    n_c: u32,
}

impl ArmSums {
    fn add(&mut self, treated: bool, w: f64, y: f64) {
        if treated {
            self.w_t += w;
            self.wy_t += w * y;
            self.n_t += 1;
        } else {
            self.w_c += w;
            self.wy_c += w * y;
            self.n_c += 1;
        }
    }

    fn tau(&self) -> f64 {
        self.wy_t / self.w_t - self.wy_c / self.w_c
    }
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn leaf_from(data: &TrainData, est_rows: &[usize]) -> LeafStats {
    let mut stats = LeafStats::default();
    for &i in est_rows {
        stats.add(data.treated[i], data.weights[i], data.outcome[i]);
    }
    stats
}

/// Greedy split search on the split-search half only: honesty means no
/// outcome or treatment value from the estimation half can influence a
/// threshold.
fn find_best_split(
    data: &TrainData,
    split_rows: &[usize],
    candidates: &[usize],
    min_t: u32,
    min_c: u32,
) -> Option<BestSplit> {
    let mut total = ArmSums::default();
    for &i in split_rows {
        total.add(data.treated[i], data.weights[i], data.outcome[i]);
    }
    if total.n_t < 2 * min_t || total.n_c < 2 * min_c {
        return None;
    }
    let mut best: Option<BestSplit> = None;
    let mut order: Vec<usize> = Vec::with_capacity(split_rows.len());
    for &f in candidates {
        order.clear();
        order.extend_from_slice(split_rows);
        order.sort_unstable_by(|&a, &b| {
            data.features
                .get(a, f)
                .partial_cmp(&data.features.get(b, f))
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut left = ArmSums::default();
        for pos in 0..order.len() - 1 {
            let i = order[pos];
            left.add(data.treated[i], data.weights[i], data.outcome[i]);
            let a = data.features.get(i, f);
            let b = data.features.get(order[pos + 1], f);
            if a >= b {
                continue;
            }
            let threshold = 0.5 * (a + b);
            // adjacent floats have no representable strict midpoint; skip
            if !(threshold > a && threshold < b) {
                continue;
            }
            let right_n_t = total.n_t - left.n_t;
            let right_n_c = total.n_c - left.n_c;
            if left.n_t < min_t || left.n_c < min_c || right_n_t < min_t || right_n_c < min_c {
                continue;
            }
            let right = ArmSums {
                w_t: total.w_t - left.w_t,
                w_c: total.w_c - left.w_c,
                wy_t: total.wy_t - left.wy_t,
                wy_c: total.wy_c - left.wy_c,
                n_t: right_n_t,
                n_c: right_n_c,
            };
            let n_l = left.w_t + left.w_c;
            let n_r = right.w_t + right.w_c;
            let d = left.tau() - right.tau();
            let gain = n_l * n_r / ((n_l + n_r) * (n_l + n_r)) * d * d;
            if !gain.is_finite() {
                continue;
            }
            let replace = match &best {
                None => true,
                Some(cur) => {
                    gain > cur.gain
                        || (gain == cur.gain
                            && (f < cur.feature || (f == cur.feature && threshold < cur.threshold)))
                }
            };
            if replace {
                best = Some(BestSplit {
                    gain,
                    feature: f,
                    threshold,
                });
            }
        }
    }
    best
}

fn grow(
    data: &TrainData,
    split_rows: Vec<usize>,
    est_rows: Vec<usize>,
    depth: usize,
    cfg: &ForestConfig,
    mtry: usize,
    rng: &mut ChaCha8Rng,
) -> TempNode {
    let at_depth_limit = cfg.max_depth.is_some_and(|d| depth >= d);
    if at_depth_limit || split_rows.len() < 2 {
        return TempNode::Leaf(leaf_from(data, &est_rows));
    }
    let p = data.features.n_cols();
    let candidates: Vec<usize> = index_sample(rng, p, mtry).into_iter().collect();
    let best = find_best_split(
        data,
        &split_rows,
        &candidates,
        cfg.min_leaf_treated as u32,
        cfg.min_leaf_control as u32,
    );
    let Some(best) = best else {
        return TempNode::Leaf(leaf_from(data, &est_rows));
    };
    let goes_left = |i: usize| data.features.get(i, best.feature) < best.threshold;
    let (split_l, split_r): (Vec<usize>, Vec<usize>) =
        split_rows.into_iter().partition(|&i| goes_left(i));
    let (est_l, est_r): (Vec<usize>, Vec<usize>) = est_rows.into_iter().partition(|&i| goes_left(i));
    let left = grow(data, split_l, est_l, depth + 1, cfg, mtry, rng);
    let right = grow(data, split_r, est_r, depth + 1, cfg, mtry, rng);
    let agg = left.aggregate().merge(&right.aggregate());
    // merge-upward repair: a child leaf missing an arm in its estimation
    // sample collapses this node back into a leaf
    let invalid_leaf = |n: &TempNode| matches!(n, TempNode::Leaf(s) if !s.has_both_arms());
    if invalid_leaf(&left) || invalid_leaf(&right) {
        return TempNode::Leaf(agg);
    }
    TempNode::Split {
        feature: best.feature,
        threshold: best.threshold,
        left: Box::new(left),
        right: Box::new(right),
        agg,
    }
}

fn flatten(node: &TempNode, out: &mut Vec<Node>) -> u32 {
    match node {
        TempNode::Leaf(stats) => {
            out.push(Node::Leaf {
                tau: stats.tau(),
                stats: *stats,
            });
            (out.len() - 1) as u32
        }
        TempNode::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } => {
            let idx = out.len();
            out.push(Node::Leaf {
                tau: 0.0,
                stats: LeafStats::default(),
            }); // placeholder
            let l = flatten(left, out);
            let r = flatten(right, out);
            out[idx] = Node::Split {
                feature: *feature as u32,
                threshold: *threshold,
                left: l,
                right: r,
            };
            idx as u32
        }
    }
}

fn build_tree(data: &TrainData, cfg: &ForestConfig, mtry: usize, tree_seed: u64) -> Result<CausalTree> {
    let n = data.outcome.len();
    let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
    let k = ((cfg.subsample_fraction * n as f64).ceil() as usize).clamp(2, n);
    let split_size = ((cfg.honesty_fraction * k as f64).ceil() as usize).clamp(1, k - 1);
    let mut halves = None;
    for _ in 0..100 {
        let subsample: Vec<usize> = index_sample(&mut rng, n, k).into_iter().collect();
        let (split_half, est_half) = subsample.split_at(split_size);
        let both = |rows: &[usize]| {
            rows.iter().any(|&i| data.treated[i]) && rows.iter().any(|&i| !data.treated[i])
        };
        if both(split_half) && both(est_half) {
            halves = Some((split_half.to_vec(), est_half.to_vec()));
            break;
        }
    }
    let Some((split_half, est_half)) = halves else {
        return Err(Error::SingleArm);
    };
    let root = grow(
        data,
        split_half.clone(),
        est_half.clone(),
        0,
        cfg,
        mtry,
        &mut rng,
    );
    let mut nodes = Vec::new();
    flatten(&root, &mut nodes);
    Ok(CausalTree {
        nodes,
        split_indices: split_half.into_iter().map(|i| i as u32).collect(),
        est_indices: est_half.into_iter().map(|i| i as u32).collect(),
    })
}

pub fn fit(
    features: &Matrix,
    treatment: &[f64],
    outcome: &[f64],
    weights: &[f64],
    cfg: &ForestConfig,
) -> Result<CausalForestModel> {
    cfg.validate()?;
    let n = features.n_rows();
    if n == 0 || features.n_cols() == 0 {
        return Err(Error::InvalidInput("empty feature matrix".into()));
    }
    for (len, context) in [
        (treatment.len(), "treatment length"),
        (outcome.len(), "outcome length"),
        (weights.len(), "weights length"),
    ] {
        if len != n {
            return Err(Error::LengthMismatch {
                context,
                got: len,
                expected: n,
            });
        }
    }
    if treatment.iter().any(|&a| a != 0.0 && a != 1.0) {
        return Err(Error::InvalidInput("treatment must be 0/1".into()));
    }
    if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidInput("weights must be strictly positive and finite".into()));
    }
    let treated: Vec<bool> = treatment.iter().map(|&a| a == 1.0).collect();
    if treated.iter().all(|&t| t) || treated.iter().all(|&t| !t) {
        return Err(Error::SingleArm);
    }
    // normalize to sum one; every downstream use is a ratio of weighted
    // sums, so the input scale cancels
    let total: f64 = weights.iter().sum();
    let data = TrainData {
        features,
        treated,
        outcome,
        weights: weights.iter().map(|w| w / total).collect(),
    };
    let mtry = cfg.resolved_mtry(features.n_cols());
    let mut seed_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let tree_seeds: Vec<u64> = (0..cfg.num_trees).map(|_| seed_rng.next_u64()).collect();
    let trees: Result<Vec<CausalTree>> = tree_seeds
        .par_iter()
        .map(|&s| build_tree(&data, cfg, mtry, s))
        .collect();
    Ok(CausalForestModel {
        format_version: MODEL_FORMAT_VERSION,
        n_features: features.n_cols(),
        trees: trees?,
    })
}

impl CausalForestModel {
    /// Per-row unweighted average of leaf effects over all trees.
    pub fn predict(&self, features: &Matrix) -> Result<Vec<f64>> {
        if features.n_cols() != self.n_features {
            return Err(Error::LengthMismatch {
                context: "prediction feature columns",
                got: features.n_cols(),
                expected: self.n_features,
            });
        }
        Ok(features.rows().map(|row| self.predict_row(row)).collect())
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }

    /// Versioned JSON dump for inspection (not a stability-guaranteed format).
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serialization cannot fail")
    }
}

/// Seeded fold assignment: rows are shuffled, then cut into `n_folds`
/// contiguous chunks. Returns the fold id of each row.
pub fn crossfit_folds(n: usize, n_folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xF01D));
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    let base = n / n_folds;
    let extra = n % n_folds;
    let mut fold_of = vec![0usize; n];
    let mut pos = 0;
    for fold in 0..n_folds {
        let size = base + usize::from(fold < extra);
        for &row in &order[pos..pos + size] {
            fold_of[row] = fold;
        }
        pos += size;
    }
    fold_of
}

/// Cross-fit predictions: each row is predicted by a forest fitted without
/// its fold. Fold `f` trains with seed derive_seed(cfg.seed, f + 1).
pub fn predict_crossfit(
    features: &Matrix,
    treatment: &[f64],
    outcome: &[f64],
    weights: &[f64],
    cfg: &ForestConfig,
    n_folds: usize,
) -> Result<Vec<f64>> {
    let n = features.n_rows();
    if n_folds < 2 || n_folds > n {
        return Err(Error::InvalidConfig(format!(
            "n_folds must lie in 2..={n}, got {n_folds}"
        )));
    }
    let fold_of = crossfit_folds(n, n_folds, cfg.seed);
    let mut predictions = vec![0.0; n];
    for fold in 0..n_folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
        if test.is_empty() {
            continue;
        }
        let has_both = train.iter().any(|&i| treatment[i] == 1.0)
            && train.iter().any(|&i| treatment[i] == 0.0);
        if !has_both {
            return Err(Error::FoldMissingArm(fold));
        }
        let sub_features = features.take_rows(&train);
        let sub_t: Vec<f64> = train.iter().map(|&i| treatment[i]).collect();
        let sub_y: Vec<f64> = train.iter().map(|&i| outcome[i]).collect();
        let sub_w: Vec<f64> = train.iter().map(|&i| weights[i]).collect();
        let fold_cfg = ForestConfig {
            seed: derive_seed(cfg.seed, fold as u64 + 1),
            ..cfg.clone()
        };
        let model = fit(&sub_features, &sub_t, &sub_y, &sub_w, &fold_cfg)?;
        let test_features = features.take_rows(&test);
        let preds = model.predict(&test_features)?;
        for (&i, pred) in test.iter().zip(preds) {
            predictions[i] = pred;
        }
    }
    Ok(predictions)
}
