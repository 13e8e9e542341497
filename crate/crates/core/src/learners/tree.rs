//! CART growing shared by the classification tree, the forest, the boosting
//! stumps and the gradient-boosting regression trees.
//!
//! Every node keeps, per feature, its sample positions sorted by that
//! feature's value. A split stably partitions those lists, so no node ever
//! re-sorts. Candidate thresholds are midpoints between consecutive distinct
//! values; the best split maximizes the weighted impurity decrease, with ties
//! going to the lower feature index and then the lower threshold.

use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::features::entropy_of_counts;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    #[default]
    Gini,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    #[default]
    Uniform,
    /// Each sample weighted by `n / (K * n_class)`.
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub criterion: SplitCriterion,
    pub class_weight: ClassWeight,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            criterion: SplitCriterion::Gini,
            class_weight: ClassWeight::Uniform,
        }
    }
}

impl TreeParams {
    pub fn with_max_depth(mut self, depth: usize) -> Self {
        self.max_depth = Some(depth);
        self
    }

    pub fn stump() -> Self {
        Self::default().with_max_depth(1)
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if self.min_samples_split < 2 {
            return Err(LearnError::InvalidParameter(format!(
                "min_samples_split = {}, must be >= 2",
                self.min_samples_split
            )));
        }
        if self.min_samples_leaf < 1 {
            return Err(LearnError::InvalidParameter("min_samples_leaf must be >= 1".into()));
        }
        Ok(())
    }
}

/// Binary tree; a sample goes left iff `x[feature_index] <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node<L> {
    Internal {
        feature_index: usize,
        threshold: f64,
        left: Box<Node<L>>,
        right: Box<Node<L>>,
    },
    Leaf(L),
}

impl<L> Node<L> {
    pub fn leaf_for(&self, x: &[f64]) -> &L {
        let mut node = self;
        loop {
            match node {
                Node::Leaf(l) => return l,
                Node::Internal {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature_index] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Depth of the deepest leaf (a lone leaf has depth 0).
    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf(_) => 0,
            Node::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_internal(&self) -> usize {
        match self {
            Node::Leaf(_) => 0,
            Node::Internal { left, right, .. } => 1 + left.n_internal() + right.n_internal(),
        }
    }

    pub fn leaves(&self) -> Vec<&L> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            match node {
                Node::Leaf(l) => out.push(l),
                Node::Internal { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out
    }
}

/// Leaf of a classification tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassLeaf {
    pub class_counts: Vec<usize>,
    /// Weighted class mass; absent when the tree was trained without weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_weights: Option<Vec<f64>>,
    pub predicted_class: usize,
}

impl ClassLeaf {
    fn mass(&self) -> Vec<f64> {
        match &self.class_weights {
            Some(w) => w.clone(),
            None => self.class_counts.iter().map(|&c| c as f64).collect(),
        }
    }

    /// Class frequencies (weighted when trained with weights).
    pub fn proba(&self) -> Vec<f64> {
        let mass = self.mass();
        let total: f64 = mass.iter().sum();
        mass.iter().map(|m| m / total).collect()
    }

    pub fn n_samples(&self) -> usize {
        self.class_counts.iter().sum()
    }
}

pub type TreeNode = Node<ClassLeaf>;

/// Index of the largest value, lowest index on ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn gini(class_counts: &[f64]) -> Result<f64, LearnError> {
    let total: f64 = class_counts.iter().sum();
    if total <= 0.0 {
        return Err(LearnError::EmptyNode);
    }
    Ok(1.0 - class_counts.iter().map(|c| (c / total).powi(2)).sum::<f64>())
}

pub fn entropy_impurity(class_counts: &[f64]) -> Result<f64, LearnError> {
    if class_counts.iter().sum::<f64>() <= 0.0 {
        return Err(LearnError::EmptyNode);
    }
    Ok(entropy_of_counts(class_counts))
}

/// Chosen split of a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature_index: usize,
    pub threshold: f64,
    /// Impurity decrease weighted by child sizes, relative to the node weight.
    pub gain: f64,
}

/// Per-sample statistics a split criterion accumulates. Positions index the
/// training sample list, which may contain repeated rows (bootstrap).
pub(crate) trait Impurity {
    type Acc: Clone;
    fn empty(&self) -> Self::Acc;
    fn push(&self, acc: &mut Self::Acc, pos: usize);
    fn total_weight(&self, acc: &Self::Acc) -> f64;
    /// Node weight times node impurity.
    fn weighted_impurity(&self, acc: &Self::Acc) -> f64;
    /// `weighted_impurity(parent - left)`.
    fn weighted_impurity_rest(&self, parent: &Self::Acc, left: &Self::Acc) -> f64;
    fn is_pure(&self, positions: &[usize]) -> bool;
}

pub(crate) struct ClassImpurity<'a> {
    pub labels: &'a [usize],
    pub weights: Option<&'a [f64]>,
    pub n_classes: usize,
    pub criterion: SplitCriterion,
}

impl ClassImpurity<'_> {
    fn weight(&self, pos: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[pos])
    }

    fn scaled(&self, mass: impl Iterator<Item = f64> + Clone) -> f64 {
        let total: f64 = mass.clone().sum();
        if total <= 0.0 {
            return 0.0;
        }
        match self.criterion {
            SplitCriterion::Gini => total - mass.map(|c| c * c).sum::<f64>() / total,
            SplitCriterion::Entropy => {
                -mass
                    .filter(|&c| c > 0.0)
                    .map(|c| c * (c / total).log2())
                    .sum::<f64>()
            }
        }
    }
}

impl Impurity for ClassImpurity<'_> {
    type Acc = Vec<f64>;

    fn empty(&self) -> Vec<f64> {
        vec![0.0; self.n_classes]
    }

    fn push(&self, acc: &mut Vec<f64>, pos: usize) {
        acc[self.labels[pos]] += self.weight(pos);
    }

    fn total_weight(&self, acc: &Vec<f64>) -> f64 {
        acc.iter().sum()
    }

    fn weighted_impurity(&self, acc: &Vec<f64>) -> f64 {
        self.scaled(acc.iter().copied())
    }

    fn weighted_impurity_rest(&self, parent: &Vec<f64>, left: &Vec<f64>) -> f64 {
        self.scaled(parent.iter().zip(left).map(|(p, l)| (p - l).max(0.0)))
    }

    fn is_pure(&self, positions: &[usize]) -> bool {
        positions
            .split_first()
            .is_none_or(|(&first, rest)| rest.iter().all(|&p| self.labels[p] == self.labels[first]))
    }
}

/// Squared-error criterion for real-valued targets.
pub(crate) struct SquaredError<'a> {
    pub targets: &'a [f64],
}

impl Impurity for SquaredError<'_> {
    type Acc = (f64, f64, f64);

    fn empty(&self) -> (f64, f64, f64) {
        (0.0, 0.0, 0.0)
    }

    fn push(&self, acc: &mut (f64, f64, f64), pos: usize) {
        let y = self.targets[pos];
        acc.0 += 1.0;
        acc.1 += y;
        acc.2 += y * y;
    }

    fn total_weight(&self, acc: &(f64, f64, f64)) -> f64 {
        acc.0
    }

    fn weighted_impurity(&self, &(w, s, ss): &(f64, f64, f64)) -> f64 {
        if w <= 0.0 {
            0.0
        } else {
            (ss - s * s / w).max(0.0)
        }
    }

    fn weighted_impurity_rest(&self, p: &(f64, f64, f64), l: &(f64, f64, f64)) -> f64 {
        self.weighted_impurity(&(p.0 - l.0, p.1 - l.1, p.2 - l.2))
    }

    fn is_pure(&self, positions: &[usize]) -> bool {
        positions
            .split_first()
            .is_none_or(|(&first, rest)| rest.iter().all(|&p| self.targets[p] == self.targets[first]))
    }
}

/// Training rows seen through sample positions.
pub(crate) struct SampleView<'a> {
    pub x: &'a Matrix,
    /// Row of the feature matrix for each sample position.
    pub rows: &'a [usize],
}

impl SampleView<'_> {
    #[inline]
    pub fn value(&self, pos: usize, feature: usize) -> f64 {
        self.x.get(self.rows[pos], feature)
    }

    pub fn n_positions(&self) -> usize {
        self.rows.len()
    }

    /// Positions sorted by each feature (ties by position).
    pub fn presort(&self, positions: &[usize]) -> Vec<Vec<usize>> {
        (0..self.x.n_cols())
            .map(|f| {
                let mut order = positions.to_vec();
                order.sort_by(|&a, &b| self.value(a, f).total_cmp(&self.value(b, f)).then(a.cmp(&b)));
                order
            })
            .collect()
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let mid = a / 2.0 + b / 2.0;
    if mid >= a && mid < b {
        mid
    } else {
        a
    }
}

/// Scans thresholds of one feature over a sorted node, updating `best`.
#[allow(clippy::too_many_arguments)]
fn sweep_feature<I: Impurity>(
    view: &SampleView<'_>,
    crit: &I,
    feature: usize,
    order: &[usize],
    parent: &I::Acc,
    parent_weighted: f64,
    min_samples_leaf: usize,
    tolerance: f64,
    best: &mut Option<Split>,
) {
    let n = order.len();
    let total = crit.total_weight(parent);
    if total <= 0.0 {
        return;
    }
    let mut left = crit.empty();
    for i in 0..n.saturating_sub(1) {
        crit.push(&mut left, order[i]);
        let a = view.value(order[i], feature);
        let b = view.value(order[i + 1], feature);
        if a >= b {
            continue;
        }
        let n_left = i + 1;
        if n_left < min_samples_leaf || n - n_left < min_samples_leaf {
            continue;
        }
        let decrease = parent_weighted
            - crit.weighted_impurity(&left)
            - crit.weighted_impurity_rest(parent, &left);
        let gain = (decrease / total).max(0.0);
        if best.is_none_or(|s| gain > s.gain + tolerance) {
            *best = Some(Split {
                feature_index: feature,
                threshold: midpoint(a, b),
                gain,
            });
        }
    }
}

fn best_split_sorted<I: Impurity>(
    view: &SampleView<'_>,
    crit: &I,
    sorted: &[Vec<usize>],
    positions: &[usize],
    candidates: &[usize],
    min_samples_leaf: usize,
) -> Option<Split> {
    let mut parent = crit.empty();
    for &p in positions {
        crit.push(&mut parent, p);
    }
    let parent_weighted = crit.weighted_impurity(&parent);
    let tolerance = 1e-12 * parent_weighted / crit.total_weight(&parent).max(f64::MIN_POSITIVE);
    let mut best = None;
    for &f in candidates {
        sweep_feature(
            view,
            crit,
            f,
            &sorted[f],
            &parent,
            parent_weighted,
            min_samples_leaf,
            tolerance,
            &mut best,
        );
    }
    best
}

/// Best classification split of all rows of `x` over `candidate_features`.
///
/// Returns `None` for a pure node or when no threshold leaves at least
/// `min_samples_leaf` samples on both sides. An impure node may return a
/// zero-gain split: parity-like labelings have no positive-gain first split
/// but are still separable below it.
#[allow(clippy::too_many_arguments)]
pub fn best_split(
    x: &Matrix,
    labels: &[usize],
    n_classes: usize,
    weights: Option<&[f64]>,
    candidate_features: &[usize],
    criterion: SplitCriterion,
    min_samples_leaf: usize,
) -> Option<Split> {
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    let view = SampleView { x, rows: &rows };
    let crit = ClassImpurity {
        labels,
        weights,
        n_classes,
        criterion,
    };
    if crit.is_pure(&rows) {
        return None;
    }
    let mut candidates = candidate_features.to_vec();
    candidates.sort_unstable();
    candidates.dedup();
    let sorted = view.presort(&rows);
    best_split_sorted(&view, &crit, &sorted, &rows, &candidates, min_samples_leaf.max(1))
}

pub(crate) struct GrowLimits {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl From<&TreeParams> for GrowLimits {
    fn from(p: &TreeParams) -> Self {
        Self {
            max_depth: p.max_depth,
            min_samples_split: p.min_samples_split,
            min_samples_leaf: p.min_samples_leaf,
        }
    }
}

/// Chooses the features a node may split on, given the node's presorted lists.
pub(crate) trait CandidatePicker {
    fn pick(&mut self, view: &SampleView<'_>, sorted: &[Vec<usize>]) -> Vec<usize>;
}

pub(crate) struct AllFeatures;

impl CandidatePicker for AllFeatures {
    fn pick(&mut self, view: &SampleView<'_>, _: &[Vec<usize>]) -> Vec<usize> {
        (0..view.x.n_cols()).collect()
    }
}

pub(crate) struct Grower<'a, I, P, F> {
    pub view: SampleView<'a>,
    pub crit: I,
    pub limits: GrowLimits,
    pub picker: P,
    pub make_leaf: F,
}

impl<I, P, F, L> Grower<'_, I, P, F>
where
    I: Impurity,
    P: CandidatePicker,
    F: FnMut(&[usize]) -> L,
{
    /// Grows a tree over every sample position.
    pub fn grow(mut self) -> Node<L> {
        let positions: Vec<usize> = (0..self.view.n_positions()).collect();
        let sorted = self.view.presort(&positions);
        let mut goes_left = vec![false; positions.len()];
        self.build(positions, sorted, 0, &mut goes_left)
    }

    fn build(
        &mut self,
        positions: Vec<usize>,
        sorted: Vec<Vec<usize>>,
        depth: usize,
        goes_left: &mut [bool],
    ) -> Node<L> {
        let stop = self.limits.max_depth.is_some_and(|d| depth >= d)
            || positions.len() < self.limits.min_samples_split
            || self.crit.is_pure(&positions);
        let split = if stop {
            None
        } else {
            let candidates = self.picker.pick(&self.view, &sorted);
            best_split_sorted(
                &self.view,
                &self.crit,
                &sorted,
                &positions,
                &candidates,
                self.limits.min_samples_leaf,
            )
        };
        let Some(split) = split else {
            return Node::Leaf((self.make_leaf)(&positions));
        };

        for &p in &positions {
            goes_left[p] = self.view.value(p, split.feature_index) <= split.threshold;
        }
        let (left_pos, right_pos): (Vec<usize>, Vec<usize>) =
            positions.iter().partition(|&&p| goes_left[p]);
        let mut left_sorted = Vec::with_capacity(sorted.len());
        let mut right_sorted = Vec::with_capacity(sorted.len());
        for order in sorted {
            let (l, r): (Vec<usize>, Vec<usize>) = order.into_iter().partition(|&p| goes_left[p]);
            left_sorted.push(l);
            right_sorted.push(r);
        }
        let left = self.build(left_pos, left_sorted, depth + 1, goes_left);
        let right = self.build(right_pos, right_sorted, depth + 1, goes_left);
        Node::Internal {
            feature_index: split.feature_index,
            threshold: split.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

/// A grown classification tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTree {
    pub root: TreeNode,
    pub n_classes: usize,
}

impl ClassTree {
    pub fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        self.root.leaf_for(x).proba()
    }

    pub fn predict_row(&self, x: &[f64]) -> usize {
        self.root.leaf_for(x).predicted_class
    }
}

/// Per-sample weights `n / (K * n_class)` over the classes present.
pub(crate) fn balanced_weights(labels: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    let n = labels.len() as f64;
    labels.iter().map(|&l| n / (present * counts[l] as f64)).collect()
}

/// Grows a classification tree on `rows` of `x` (rows may repeat).
pub(crate) fn grow_class_tree<P: CandidatePicker>(
    x: &Matrix,
    rows: &[usize],
    labels: &[usize],
    weights: Option<&[f64]>,
    n_classes: usize,
    params: &TreeParams,
    picker: P,
) -> ClassTree {
    let crit = ClassImpurity {
        labels,
        weights,
        n_classes,
        criterion: params.criterion,
    };
    let make_leaf = |positions: &[usize]| {
        let mut counts = vec![0usize; n_classes];
        for &p in positions {
            counts[labels[p]] += 1;
        }
        let class_weights = weights.map(|w| {
            let mut mass = vec![0.0; n_classes];
            for &p in positions {
                mass[labels[p]] += w[p];
            }
            mass
        });
        let predicted_class = match &class_weights {
            Some(mass) => argmax(mass),
            None => argmax(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>()),
        };
        ClassLeaf {
            class_counts: counts,
            class_weights,
            predicted_class,
        }
    };
    let root = Grower {
        view: SampleView { x, rows },
        crit,
        limits: GrowLimits::from(params),
        picker,
        make_leaf,
    }
    .grow();
    ClassTree { root, n_classes }
}

/// CART classification tree on every row of `x`.
pub fn fit_tree(
    x: &Matrix,
    labels: &[usize],
    n_classes: usize,
    sample_weights: Option<&[f64]>,
    params: &TreeParams,
) -> Result<ClassTree, LearnError> {
    params.validate()?;
    if x.n_rows() == 0 {
        return Err(LearnError::EmptyDataset);
    }
    if labels.len() != x.n_rows() {
        return Err(LearnError::ShapeMismatch {
            expected: x.n_rows(),
            actual: labels.len(),
        });
    }
    let balanced;
    let weights = match (sample_weights, params.class_weight) {
        (Some(w), ClassWeight::Uniform) => Some(check_weights(w, x.n_rows())?),
        (Some(w), ClassWeight::Balanced) => {
            check_weights(w, x.n_rows())?;
            let b = balanced_weights(labels, n_classes);
            balanced = w.iter().zip(&b).map(|(a, b)| a * b).collect::<Vec<_>>();
            Some(balanced.as_slice())
        }
        (None, ClassWeight::Balanced) => {
            balanced = balanced_weights(labels, n_classes);
            Some(balanced.as_slice())
        }
        (None, ClassWeight::Uniform) => None,
    };
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    Ok(grow_class_tree(x, &rows, labels, weights, n_classes, params, AllFeatures))
}

fn check_weights(w: &[f64], n: usize) -> Result<&[f64], LearnError> {
    if w.len() != n {
        return Err(LearnError::ShapeMismatch {
            expected: n,
            actual: w.len(),
        });
    }
    if w.iter().any(|&v| !v.is_finite() || v < 0.0) || w.iter().sum::<f64>() <= 0.0 {
        return Err(LearnError::InvalidParameter(
            "sample weights must be finite, nonnegative and not all zero".into(),
        ));
    }
    Ok(w)
}

/// Regression tree over real targets; leaf values come from `leaf_value`.
pub(crate) fn grow_regression_tree(
    x: &Matrix,
    targets: &[f64],
    max_depth: usize,
    leaf_value: impl FnMut(&[usize]) -> f64,
) -> Node<f64> {
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    Grower {
        view: SampleView { x, rows: &rows },
        crit: SquaredError { targets },
        limits: GrowLimits {
            max_depth: Some(max_depth),
            min_samples_split: 2,
            min_samples_leaf: 1,
        },
        picker: AllFeatures,
        make_leaf: leaf_value,
    }
    .grow()
}
