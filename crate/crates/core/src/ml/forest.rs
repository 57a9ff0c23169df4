//! Honest random forests: regression, probability and causal variants.
//!
//! Every tree draws a fresh partition of the full training sample into a
//! build part (grows the splits), an estimation part (populates the leaves)
//! and a left-out part. The partition orders units by a hash of their unit
//! id, so a forest does not depend on the row order of its training data.

use ndarray::{ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::split_half;
use crate::error::{Error, Result};
use crate::rng;

/// Lower and upper clamp applied to probability-forest predictions.
pub const PROBABILITY_CLAMP: (f64, f64) = (0.01, 0.99);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate split variables per node; `None` means `min(70, k)`.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    /// Shares of (build, estimate, leave-out) units per tree.
    pub honest_fractions: (f64, f64, f64),
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 1000,
            mtry: None,
            min_leaf: 1,
            honest_fractions: (0.25, 0.25, 0.50),
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Effective `mtry` for `k` covariates, after validating the params.
    pub fn resolve_mtry(&self, k: usize) -> Result<usize> {
        let (b, e, l) = self.honest_fractions;
        if b <= 0.0 || e <= 0.0 || l < 0.0 || ((b + e + l) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "honest fractions must be positive build/estimate shares summing to 1, got ({b}, {e}, {l})"
            )));
        }
        if self.n_trees == 0 {
            return Err(Error::InvalidArgument("n_trees must be positive".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidArgument("min_leaf must be positive".into()));
        }
        let mtry = self.mtry.unwrap_or(70.min(k));
        if mtry == 0 || mtry > k {
            return Err(Error::InvalidArgument(format!("mtry must lie in 1..={k}, got {mtry}")));
        }
        Ok(mtry)
    }

    fn partition_sizes(&self, n: usize) -> (usize, usize) {
        let (b, e, _) = self.honest_fractions;
        let n_build = ((b * n as f64).round() as usize).max(1);
        let n_est = ((e * n as f64).round() as usize).max(1).min(n - n_build);
        (n_build, n_est)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        var: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// `units` are training-row indices of the estimation part in this leaf.
    /// `stats` holds `[mean]` for regression leaves and
    /// `[sum d*y, sum d, sum (1-d)*y, sum (1-d)]` divided by the leaf size
    /// for causal leaves.
    Leaf { units: Vec<u32>, stats: [f64; 4] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    fn leaf_of(&self, x: ArrayView1<f64>) -> &Node {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Split { var, threshold, left, right } => {
                    idx = if x[*var] <= *threshold { *left } else { *right };
                }
                leaf => return leaf,
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForestKind {
    Regression,
    Probability,
}

/// Fitted regression or probability forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    kind: ForestKind,
    params: ForestParams,
    k: usize,
    trees: Vec<Tree>,
    /// Training outcomes, needed for explicit weight queries.
    y: Vec<f64>,
}

impl ForestModel {
    pub fn kind(&self) -> ForestKind {
        self.kind
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn training_outcome(&self) -> &[f64] {
        &self.y
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, got });
        }
        Ok(())
    }

    fn clamp(&self, v: f64) -> f64 {
        match self.kind {
            ForestKind::Regression => v,
            ForestKind::Probability => v.clamp(PROBABILITY_CLAMP.0, PROBABILITY_CLAMP.1),
        }
    }

    /// Average of the per-tree leaf means.
    pub fn predict_row(&self, x: ArrayView1<f64>) -> Result<f64> {
        self.check_dim(x.len())?;
        let mut sum = 0.0;
        for tree in &self.trees {
            if let Node::Leaf { stats, .. } = tree.leaf_of(x) {
                sum += stats[0];
            }
        }
        Ok(self.clamp(sum / self.trees.len() as f64))
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.check_dim(x.ncols())?;
        Ok(x.outer_iter()
            .map(|row| self.predict_row(row).expect("dimension checked"))
            .collect())
    }

    /// Neighbourhood weights over the training rows: the tree average of
    /// uniform within-leaf weights. Non-negative and summing to one.
    pub fn weights(&self, x: ArrayView1<f64>) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        Ok(leaf_weights(&self.trees, self.y.len(), x))
    }
}

fn leaf_weights(trees: &[Tree], n: usize, x: ArrayView1<f64>) -> Vec<f64> {
    let mut w = vec![0.0; n];
    let scale = 1.0 / trees.len() as f64;
    for tree in trees {
        if let Node::Leaf { units, .. } = tree.leaf_of(x) {
            let share = scale / units.len() as f64;
            for &u in units {
                w[u as usize] += share;
            }
        }
    }
    w
}

/// How the causal forest centres treatment and outcome before splitting.
#[derive(Debug, Clone, PartialEq)]
pub enum Centering {
    None,
    /// Cross-fitted nuisance predictions supplied by the caller.
    Supplied { p_hat: Vec<f64>, mu_hat: Vec<f64> },
    /// Cross-fit a probability and a regression forest internally.
    Internal,
}

/// Fitted causal forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalForestModel {
    params: ForestParams,
    k: usize,
    trees: Vec<Tree>,
    /// Outcome used in the weighted mean difference (centred if locally centred).
    y: Vec<f64>,
    d: Vec<f64>,
    locally_centered: bool,
}

impl CausalForestModel {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn locally_centered(&self) -> bool {
        self.locally_centered
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, got });
        }
        Ok(())
    }

    /// Per-arm weights, each normalized to sum to one within its arm.
    pub fn arm_weights(&self, x: ArrayView1<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_dim(x.len())?;
        let alpha = leaf_weights(&self.trees, self.y.len(), x);
        let mut w1 = vec![0.0; alpha.len()];
        let mut w0 = vec![0.0; alpha.len()];
        let (mut s1, mut s0) = (0.0, 0.0);
        for i in 0..alpha.len() {
            if self.d[i] == 1.0 {
                w1[i] = alpha[i];
                s1 += alpha[i];
            } else {
                w0[i] = alpha[i];
                s0 += alpha[i];
            }
        }
        if s1 == 0.0 || s0 == 0.0 {
            return Err(one_arm_error());
        }
        w1.iter_mut().for_each(|w| *w /= s1);
        w0.iter_mut().for_each(|w| *w /= s0);
        Ok((w1, w0))
    }

    /// Difference of the two arm-wise weighted outcome means.
    pub fn predict_row(&self, x: ArrayView1<f64>) -> Result<f64> {
        self.check_dim(x.len())?;
        let mut acc = [0.0; 4];
        for tree in &self.trees {
            if let Node::Leaf { stats, .. } = tree.leaf_of(x) {
                for (a, s) in acc.iter_mut().zip(stats) {
                    *a += s;
                }
            }
        }
        if acc[1] == 0.0 || acc[3] == 0.0 {
            return Err(one_arm_error());
        }
        Ok(acc[0] / acc[1] - acc[2] / acc[3])
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.check_dim(x.ncols())?;
        x.outer_iter()
            .enumerate()
            .map(|(i, row)| {
                self.predict_row(row).map_err(|e| Error::Estimation(format!("query {i}: {e}")))
            })
            .collect()
    }
}

fn one_arm_error() -> Error {
    Error::Estimation("neighbourhood of query point contains only one treatment arm".into())
}

/// Column-major copy of the design plus per-unit split targets.
struct TrainingView {
    cols: Vec<Vec<f64>>,
    ids: Vec<u64>,
}

impl TrainingView {
    fn new(x: ArrayView2<f64>, ids: &[u64]) -> Self {
        let cols = x.columns().into_iter().map(|c| c.to_vec()).collect();
        Self { cols, ids: ids.to_vec() }
    }

    fn n(&self) -> usize {
        self.ids.len()
    }
}

/// Split rule used while growing a tree.
enum Criterion<'a> {
    /// Minimize within-leaf squared error of `y`.
    Mse { y: &'a [f64] },
    /// Maximize heterogeneity of the causal pseudo-outcomes.
    Causal {
        y: &'a [f64],
        d: &'a [f64],
        arm: &'a [f64],
    },
}

/// Deviations from the node mean, accumulated relative to the first unit so
/// that a constant shift of `v` leaves the result unchanged whenever the
/// pairwise differences are exact.
fn pivot_deviations(units: &[u32], v: &[f64]) -> Vec<f64> {
    let pivot = v[units[0] as usize];
    let diffs: Vec<f64> = units.iter().map(|&u| v[u as usize] - pivot).collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    diffs.iter().map(|x| x - mean).collect()
}

struct TreeGrower<'a> {
    view: &'a TrainingView,
    criterion: Criterion<'a>,
    mtry: usize,
    min_leaf: usize,
    seed: u64,
}

struct SplitChoice {
    var: usize,
    threshold: f64,
    gain: f64,
}

impl<'a> TreeGrower<'a> {
    /// Split targets for the units of a node, or `None` if the node must stay a leaf.
    fn targets(&self, units: &[u32]) -> Option<Vec<f64>> {
        match &self.criterion {
            Criterion::Mse { y } => Some(units.iter().map(|&u| y[u as usize]).collect()),
            Criterion::Causal { y, d, arm } => {
                let treated = units.iter().filter(|&&u| arm[u as usize] == 1.0).count();
                if treated == 0 || treated == units.len() {
                    return None;
                }
                let m = units.len() as f64;
                let dd = pivot_deviations(units, d);
                let yd = pivot_deviations(units, y);
                let var = dd.iter().map(|a| a * a).sum::<f64>() / m;
                let cov = dd.iter().zip(&yd).map(|(a, b)| a * b).sum::<f64>() / m;
                if var <= 0.0 {
                    return None;
                }
                let beta = cov / var;
                Some(
                    dd.iter()
                        .zip(&yd)
                        .map(|(a, b)| a * (b - a * beta) / var)
                        .collect(),
                )
            }
        }
    }

    fn candidate_vars(&self, node_id: u64) -> Vec<usize> {
        let k = self.view.cols.len();
        if self.mtry >= k {
            return (0..k).collect();
        }
        let mut r = rng::stream(rng::derive_seed(self.seed, "node", node_id));
        let mut vars = rand::seq::index::sample(&mut r, k, self.mtry).into_vec();
        vars.sort_unstable();
        vars
    }

    fn best_split(&self, units: &[u32], targets: &[f64], node_id: u64) -> Option<SplitChoice> {
        let m = units.len();
        if m < 2 * self.min_leaf {
            return None;
        }
        let total: f64 = targets.iter().sum();
        let total_sq: f64 = targets.iter().map(|t| t * t).sum();
        let mut best: Option<SplitChoice> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(m);
        for var in self.candidate_vars(node_id) {
            let col = &self.view.cols[var];
            pairs.clear();
            pairs.extend(units.iter().zip(targets).map(|(&u, &t)| (col[u as usize], t)));
            // stable: equal values keep hash-rank order
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite covariates"));
            if pairs[0].0 == pairs[m - 1].0 {
                continue;
            }
            let mut left_sum = 0.0;
            for s in 1..m {
                left_sum += pairs[s - 1].1;
                if pairs[s - 1].0 == pairs[s].0 {
                    continue;
                }
                let (nl, nr) = (s, m - s);
                if nl < self.min_leaf || nr < self.min_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                let (nlf, nrf) = (nl as f64, nr as f64);
                let gain = match self.criterion {
                    Criterion::Mse { .. } => {
                        left_sum * left_sum / nlf + right_sum * right_sum / nrf - total * total / m as f64
                    }
                    Criterion::Causal { .. } => {
                        let diff = left_sum / nlf - right_sum / nrf;
                        nlf * nrf * diff * diff
                    }
                };
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(SplitChoice {
                        var,
                        threshold: 0.5 * (pairs[s - 1].0 + pairs[s].0),
                        gain,
                    });
                }
            }
        }
        let floor = match self.criterion {
            Criterion::Mse { .. } => 1e-12 * total_sq,
            Criterion::Causal { .. } => 0.0,
        };
        best.filter(|b| b.gain > floor)
    }

    /// Grow on `build` (hash-rank order), then populate and prune with `estimate`.
    fn grow(&self, build: Vec<u32>, estimate: Vec<u32>) -> Tree {
        let mut raw: Vec<RawNode> = vec![RawNode::Pending];
        let mut stack = vec![(0usize, build)];
        let mut next_id: u64 = 0;
        while let Some((slot, units)) = stack.pop() {
            let node_id = next_id;
            next_id += 1;
            let split = self
                .targets(&units)
                .and_then(|t| self.best_split(&units, &t, node_id));
            match split {
                None => raw[slot] = RawNode::Leaf,
                Some(choice) => {
                    let col = &self.view.cols[choice.var];
                    let (l, r): (Vec<u32>, Vec<u32>) =
                        units.iter().partition(|&&u| col[u as usize] <= choice.threshold);
                    let left = raw.len();
                    raw.push(RawNode::Pending);
                    let right = raw.len();
                    raw.push(RawNode::Pending);
                    raw[slot] = RawNode::Split { var: choice.var, threshold: choice.threshold, left, right };
                    stack.push((right, r));
                    stack.push((left, l));
                }
            }
        }
        let mut nodes = Vec::new();
        self.populate(&raw, 0, estimate, &mut nodes);
        Tree { nodes }
    }

    fn subtree_count(&self, raw: &[RawNode], idx: usize, units: &[u32]) -> (Vec<u32>, Vec<u32>) {
        match raw[idx] {
            RawNode::Split { var, threshold, .. } => {
                let col = &self.view.cols[var];
                units.iter().partition(|&&u| col[u as usize] <= threshold)
            }
            _ => unreachable!("only called on split nodes"),
        }
    }

    /// Route estimation units; a split whose child would hold fewer than
    /// `min_leaf` estimation units collapses into a leaf.
    fn populate(&self, raw: &[RawNode], idx: usize, units: Vec<u32>, out: &mut Vec<Node>) -> usize {
        let slot = out.len();
        out.push(Node::Leaf { units: Vec::new(), stats: [0.0; 4] });
        if let RawNode::Split { var, threshold, left, right } = raw[idx] {
            let (l, r) = self.subtree_count(raw, idx, &units);
            if l.len() >= self.min_leaf && r.len() >= self.min_leaf {
                let li = self.populate(raw, left, l, out);
                let ri = self.populate(raw, right, r, out);
                out[slot] = Node::Split { var, threshold, left: li, right: ri };
                return slot;
            }
        }
        out[slot] = self.make_leaf(units);
        slot
    }

    fn make_leaf(&self, units: Vec<u32>) -> Node {
        let m = units.len() as f64;
        let mut stats = [0.0; 4];
        match &self.criterion {
            Criterion::Mse { y } => {
                stats[0] = units.iter().map(|&u| y[u as usize]).sum::<f64>() / m;
            }
            Criterion::Causal { y, arm, .. } => {
                for &u in &units {
                    let (yi, di) = (y[u as usize], arm[u as usize]);
                    if di == 1.0 {
                        stats[0] += yi;
                        stats[1] += 1.0;
                    } else {
                        stats[2] += yi;
                        stats[3] += 1.0;
                    }
                }
                stats.iter_mut().for_each(|s| *s /= m);
            }
        }
        Node::Leaf { units, stats }
    }
}

enum RawNode {
    Pending,
    Leaf,
    Split { var: usize, threshold: f64, left: usize, right: usize },
}

/// Honest partition of `0..n` for one tree: units ordered by id hash.
fn honest_partition(view: &TrainingView, params: &ForestParams, tree_seed: u64) -> (Vec<u32>, Vec<u32>) {
    let n = view.n();
    let mut order: Vec<(u64, u64, u32)> = (0..n)
        .map(|i| (rng::unit_key(tree_seed, view.ids[i]), view.ids[i], i as u32))
        .collect();
    order.sort_unstable();
    let (n_build, n_est) = params.partition_sizes(n);
    let build = order[..n_build].iter().map(|t| t.2).collect();
    let estimate = order[n_build..n_build + n_est].iter().map(|t| t.2).collect();
    (build, estimate)
}

fn grow_forest<'a>(
    view: &TrainingView,
    params: &ForestParams,
    mtry: usize,
    criterion: impl Fn() -> Criterion<'a> + Sync,
) -> Vec<Tree> {
    (0..params.n_trees)
        .into_par_iter()
        .map(|b| {
            let tree_seed = rng::derive_seed(params.seed, "tree", b as u64);
            let (build, estimate) = honest_partition(view, params, tree_seed);
            let grower = TreeGrower {
                view,
                criterion: criterion(),
                mtry,
                min_leaf: params.min_leaf,
                seed: tree_seed,
            };
            grower.grow(build, estimate)
        })
        .collect()
}

fn check_training(x: ArrayView2<f64>, len: usize, ids: &[u64]) -> Result<()> {
    let n = x.nrows();
    if len != n {
        return Err(Error::DimensionMismatch { expected: n, got: len });
    }
    if ids.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: ids.len() });
    }
    if n < 4 {
        return Err(Error::InvalidArgument(format!(
            "honest forests need at least 4 training units, got {n}"
        )));
    }
    Ok(())
}

fn default_ids(n: usize) -> Vec<u64> {
    (0..n as u64).collect()
}

pub fn fit_regression_forest(x: ArrayView2<f64>, y: &[f64], params: &ForestParams) -> Result<ForestModel> {
    fit_regression_forest_with_ids(x, y, &default_ids(x.nrows()), params)
}

/// Regression forest whose per-tree partitions are keyed by `ids`.
pub fn fit_regression_forest_with_ids(
    x: ArrayView2<f64>,
    y: &[f64],
    ids: &[u64],
    params: &ForestParams,
) -> Result<ForestModel> {
    fit_mse_forest(x, y, ids, params, ForestKind::Regression)
}

pub fn fit_probability_forest(x: ArrayView2<f64>, d: &[f64], params: &ForestParams) -> Result<ForestModel> {
    fit_probability_forest_with_ids(x, d, &default_ids(x.nrows()), params)
}

pub fn fit_probability_forest_with_ids(
    x: ArrayView2<f64>,
    d: &[f64],
    ids: &[u64],
    params: &ForestParams,
) -> Result<ForestModel> {
    if d.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument("probability forest needs a 0/1 outcome".into()));
    }
    let ones = d.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == d.len() {
        return Err(Error::Estimation("probability forest needs both classes present".into()));
    }
    fit_mse_forest(x, d, ids, params, ForestKind::Probability)
}

fn fit_mse_forest(
    x: ArrayView2<f64>,
    y: &[f64],
    ids: &[u64],
    params: &ForestParams,
    kind: ForestKind,
) -> Result<ForestModel> {
    check_training(x, y.len(), ids)?;
    let mtry = params.resolve_mtry(x.ncols())?;
    let view = TrainingView::new(x, ids);
    let trees = grow_forest(&view, params, mtry, || Criterion::Mse { y });
    Ok(ForestModel {
        kind,
        params: params.clone(),
        k: x.ncols(),
        trees,
        y: y.to_vec(),
    })
}

/// Causal forest with pseudo-outcome splitting.
///
/// With local centering the splits use `d - p_hat` and `y - mu_hat`, and the
/// leaves store the centred outcome `y - mu_hat` next to the binary arm.
pub fn fit_causal_forest(
    x: ArrayView2<f64>,
    y: &[f64],
    d: &[f64],
    ids: &[u64],
    params: &ForestParams,
    centering: &Centering,
) -> Result<CausalForestModel> {
    check_training(x, y.len(), ids)?;
    if d.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), got: d.len() });
    }
    if d.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument("treatment must be 0/1".into()));
    }
    let treated = d.iter().filter(|&&v| v == 1.0).count();
    if treated == 0 || treated == d.len() {
        return Err(Error::Estimation("causal forest needs both treatment arms".into()));
    }
    let mtry = params.resolve_mtry(x.ncols())?;
    let (y_split, d_split, locally_centered) = match centering {
        Centering::None => (y.to_vec(), d.to_vec(), false),
        Centering::Supplied { p_hat, mu_hat } => {
            for v in [p_hat, mu_hat] {
                if v.len() != y.len() {
                    return Err(Error::DimensionMismatch { expected: y.len(), got: v.len() });
                }
            }
            centered(y, d, p_hat, mu_hat)
        }
        Centering::Internal => {
            let (p_hat, mu_hat) = cross_fit_centering(x, y, d, ids, params)?;
            centered(y, d, &p_hat, &mu_hat)
        }
    };
    let view = TrainingView::new(x, ids);
    let trees = grow_forest(&view, params, mtry, || Criterion::Causal {
        y: &y_split,
        d: &d_split,
        arm: d,
    });
    Ok(CausalForestModel {
        params: params.clone(),
        k: x.ncols(),
        trees,
        y: y_split,
        d: d.to_vec(),
        locally_centered,
    })
}

fn centered(y: &[f64], d: &[f64], p_hat: &[f64], mu_hat: &[f64]) -> (Vec<f64>, Vec<f64>, bool) {
    let yc = y.iter().zip(mu_hat).map(|(a, b)| a - b).collect();
    let dc = d.iter().zip(p_hat).map(|(a, b)| a - b).collect();
    (yc, dc, true)
}

/// Two-fold cross-fitted propensity and outcome forests.
fn cross_fit_centering(
    x: ArrayView2<f64>,
    y: &[f64],
    d: &[f64],
    ids: &[u64],
    params: &ForestParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = y.len();
    let plan = split_half(n, rng::derive_seed(params.seed, "centering", 0))?;
    let folds = plan.folds();
    let mut p_hat = vec![0.0; n];
    let mut mu_hat = vec![0.0; n];
    for (h, train) in folds.iter().enumerate() {
        let test = &folds[1 - h];
        let xt = x.select(ndarray::Axis(0), train);
        let pick = |v: &[f64]| -> Vec<f64> { train.iter().map(|&i| v[i]).collect() };
        let idt: Vec<u64> = train.iter().map(|&i| ids[i]).collect();
        let fold_params = params.with_seed(rng::derive_seed(params.seed, "centering-fold", h as u64));
        let pf = fit_probability_forest_with_ids(xt.view(), &pick(d), &idt, &fold_params)?;
        let mf = fit_regression_forest_with_ids(xt.view(), &pick(y), &idt, &fold_params)?;
        for &i in test {
            p_hat[i] = pf.predict_row(x.row(i))?;
            mu_hat[i] = mf.predict_row(x.row(i))?;
        }
    }
    Ok((p_hat, mu_hat))
}
