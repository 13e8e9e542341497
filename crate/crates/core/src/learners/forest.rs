//! Bagged CART trees with per-split feature subsampling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{balanced_weights, grow_class_tree, CandidatePicker, ClassTree, ClassWeight, SampleView, TreeParams};
use super::LearnError;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    /// Features tried per split; `None` means `round(sqrt(n_features))`.
    pub max_features: Option<usize>,
    /// Disabling trains every tree on the full sample, once each.
    pub bootstrap: bool,
    pub keep_oob: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            tree: TreeParams::default(),
            max_features: None,
            bootstrap: true,
            keep_oob: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<ClassTree>,
    pub n_features_per_split: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oob_indices: Option<Vec<Vec<usize>>>,
}

impl ForestModel {
    /// Mean of the trees' leaf class frequencies.
    pub fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        let k = self.trees[0].n_classes;
        let mut acc = vec![0.0; k];
        for t in &self.trees {
            for (a, p) in acc.iter_mut().zip(t.predict_proba_row(x)) {
                *a += p;
            }
        }
        let n = self.trees.len() as f64;
        acc.iter().map(|a| a / n).collect()
    }
}

/// Shuffles the feature order and keeps the first `max_features` that are
/// not constant inside the node.
struct RandomFeatures {
    rng: ChaCha8Rng,
    max_features: usize,
}

impl CandidatePicker for RandomFeatures {
    fn pick(&mut self, view: &SampleView<'_>, sorted: &[Vec<usize>]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..view.x.n_cols()).collect();
        order.shuffle(&mut self.rng);
        let mut chosen: Vec<usize> = order
            .into_iter()
            .filter(|&f| match (sorted[f].first(), sorted[f].last()) {
                (Some(&a), Some(&b)) => view.value(a, f) < view.value(b, f),
                _ => false,
            })
            .take(self.max_features)
            .collect();
        chosen.sort_unstable();
        chosen
    }
}

pub fn default_features_per_split(n_features: usize) -> usize {
    ((n_features as f64).sqrt().round() as usize).max(1)
}

/// Per-tree generators share the master seed on distinct ChaCha streams, so
/// the forest does not depend on how trees are scheduled across threads.
fn tree_rng(seed: u64, tree_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree_index as u64);
    rng
}

pub fn fit_forest(
    x: &Matrix,
    labels: &[usize],
    n_classes: usize,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel, LearnError> {
    params.tree.validate()?;
    let n = x.n_rows();
    if n == 0 {
        return Err(LearnError::EmptyDataset);
    }
    if params.n_trees == 0 {
        return Err(LearnError::InvalidParameter("n_trees must be >= 1".into()));
    }
    let n_features_per_split = params
        .max_features
        .unwrap_or_else(|| default_features_per_split(x.n_cols()))
        .clamp(1, x.n_cols().max(1));
    let class_weights = match params.tree.class_weight {
        ClassWeight::Balanced => Some(balanced_weights(labels, n_classes)),
        ClassWeight::Uniform => None,
    };

    let grown: Vec<(ClassTree, Vec<usize>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(seed, t);
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let sample_labels: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
            let sample_weights: Option<Vec<f64>> =
                class_weights.as_ref().map(|w| rows.iter().map(|&r| w[r]).collect());
            let picker = RandomFeatures {
                rng: rng.clone(),
                max_features: n_features_per_split,
            };
            let tree = grow_class_tree(
                x,
                &rows,
                &sample_labels,
                sample_weights.as_deref(),
                n_classes,
                &params.tree,
                picker,
            );
            let oob = if params.keep_oob {
                let mut seen = vec![false; n];
                for &r in &rows {
                    seen[r] = true;
                }
                (0..n).filter(|&i| !seen[i]).collect()
            } else {
                Vec::new()
            };
            (tree, oob)
        })
        .collect();

    let (trees, oob): (Vec<ClassTree>, Vec<Vec<usize>>) = grown.into_iter().unzip();
    Ok(ForestModel {
        trees,
        n_features_per_split,
        seed,
        oob_indices: params.keep_oob.then_some(oob),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::tree::fit_tree;

    fn blobs() -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..60 {
            let c = i % 3;
            rows.push(vec![
                c as f64 * 2.0 + rng.random::<f64>(),
                rng.random::<f64>(),
                (c == 1) as u8 as f64 + rng.random::<f64>() * 0.5,
            ]);
            y.push(c);
        }
        (Matrix::from_rows(&rows), y)
    }

    #[test]
    fn sqrt_rule() {
        assert_eq!(default_features_per_split(20), 4);
        assert_eq!(default_features_per_split(2), 1);
        assert_eq!(default_features_per_split(0), 1);
    }

    #[test]
    fn single_unbagged_tree_matches_cart() {
        let (x, y) = blobs();
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            max_features: Some(x.n_cols()),
            ..ForestParams::default()
        };
        let forest = fit_forest(&x, &y, 3, &params, 5).unwrap();
        let tree = fit_tree(&x, &y, 3, None, &TreeParams::default()).unwrap();
        assert_eq!(forest.trees[0].root, tree.root);
        for row in x.rows() {
            assert_eq!(forest.predict_proba_row(row), tree.predict_proba_row(row));
        }
    }

    #[test]
    fn seeded_and_thread_independent() {
        let (x, y) = blobs();
        let params = ForestParams {
            n_trees: 8,
            keep_oob: true,
            ..ForestParams::default()
        };
        let a = fit_forest(&x, &y, 3, &params, 11).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| fit_forest(&x, &y, 3, &params, 11).unwrap());
        assert_eq!(a, b);
        let c = fit_forest(&x, &y, 3, &params, 12).unwrap();
        assert_ne!(a.trees, c.trees);
        let oob = a.oob_indices.unwrap();
        assert_eq!(oob.len(), 8);
        assert!(oob.iter().all(|o| !o.is_empty() && o.len() < 60));
    }
}
