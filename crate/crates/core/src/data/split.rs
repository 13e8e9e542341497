use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};

/// Disjoint train/test partition of `0..n_samples`, both sides sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

/// Row indices of each class after a seeded shuffle.
fn shuffled_by_class(labels: &[usize], n_classes: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    by_class
}

fn require_members(d: &Dataset, min: usize) -> Result<(), DataError> {
    for (class, &count) in d.class_counts().iter().enumerate() {
        if count > 0 && count < min {
            return Err(DataError::TooFewSamples {
                class: d.taxonomy().name(class).unwrap().to_string(),
                count,
                required: min,
            });
        }
    }
    Ok(())
}

/// Hold-out split that preserves per-class proportions.
///
/// Each class contributes `round(count * test_fraction)` test rows, clamped so
/// at least one row of the class stays in training.
pub fn stratified_split(d: &Dataset, test_fraction: f64, seed: u64) -> Result<SplitPlan, DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidParameter(format!(
            "test fraction {test_fraction} must lie in (0, 1)"
        )));
    }
    require_members(d, 2)?;
    let by_class = shuffled_by_class(d.labels(), d.n_classes(), seed);
    let mut n_test: Vec<usize> = by_class
        .iter()
        .map(|m| ((m.len() as f64 * test_fraction).round() as usize).min(m.len().saturating_sub(1)))
        .collect();
    if n_test.iter().sum::<usize>() == 0 {
        let largest = (0..by_class.len())
            .max_by_key(|&c| (by_class[c].len(), std::cmp::Reverse(c)))
            .unwrap();
        n_test[largest] = 1;
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (members, &k) in by_class.iter().zip(&n_test) {
        test.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan {
        train_indices: train,
        test_indices: test,
        seed,
    })
}

/// Stratified k-fold partition. Classes are dealt round-robin onto folds, the
/// dealing position carrying over between classes so fold totals stay level.
pub fn kfold(d: &Dataset, k: usize, seed: u64) -> Result<Vec<SplitPlan>, DataError> {
    if k < 2 {
        return Err(DataError::InvalidParameter(format!("k = {k}, need at least 2 folds")));
    }
    require_members(d, k)?;
    let by_class = shuffled_by_class(d.labels(), d.n_classes(), seed);
    let mut fold_of = vec![0usize; d.n_samples()];
    let mut next = 0;
    for members in &by_class {
        for &i in members {
            fold_of[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..d.n_samples()).partition(|&i| fold_of[i] == f);
            SplitPlan {
                train_indices: train,
                test_indices: test,
                seed,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ClassTaxonomy;
    use crate::matrix::Matrix;

    fn labelled(labels: Vec<usize>) -> Dataset {
        let n = labels.len();
        Dataset::new(
            Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()),
            vec!["x".into()],
            labels,
            ClassTaxonomy::stage_one(),
        )
        .unwrap()
    }

    fn count(d: &Dataset, idx: &[usize], class: usize) -> usize {
        idx.iter().filter(|&&i| d.labels()[i] == class).count()
    }

    #[test]
    fn per_class_rounding() {
        // 90 * 0.2 = 18, 10 * 0.2 = 2
        let d = labelled([vec![0; 90], vec![1; 10]].concat());
        let plan = stratified_split(&d, 0.2, 7).unwrap();
        assert_eq!(count(&d, &plan.test_indices, 0), 18);
        assert_eq!(count(&d, &plan.test_indices, 1), 2);
        assert_eq!(plan.train_indices.len(), 80);
    }

    #[test]
    fn keeps_one_training_row_per_class() {
        let d = labelled(vec![0, 0, 1, 1, 1, 1]);
        let plan = stratified_split(&d, 0.9, 1).unwrap();
        assert_eq!(count(&d, &plan.train_indices, 0), 1);
        assert_eq!(count(&d, &plan.train_indices, 1), 1);
    }

    #[test]
    fn tiny_fraction_still_yields_a_test_row() {
        let d = labelled(vec![0, 0, 1, 1]);
        let plan = stratified_split(&d, 0.01, 1).unwrap();
        assert_eq!(plan.test_indices.len(), 1);
    }

    #[test]
    fn split_is_seed_deterministic() {
        let d = labelled((0..50).map(|i| i % 2).collect());
        assert_eq!(stratified_split(&d, 0.3, 9).unwrap(), stratified_split(&d, 0.3, 9).unwrap());
        assert_ne!(
            stratified_split(&d, 0.3, 9).unwrap().test_indices,
            stratified_split(&d, 0.3, 10).unwrap().test_indices
        );
    }

    #[test]
    fn split_preconditions() {
        let d = labelled(vec![0, 0, 0, 1]);
        assert!(matches!(stratified_split(&d, 0.5, 0), Err(DataError::TooFewSamples { count: 1, .. })));
        assert!(stratified_split(&labelled(vec![0, 0]), 1.0, 0).is_err());
    }

    #[test]
    fn even_folds() {
        let d = labelled((0..10).map(|i| i % 2).collect());
        let folds = kfold(&d, 5, 3).unwrap();
        assert_eq!(folds.len(), 5);
        assert!(folds.iter().all(|f| f.test_indices.len() == 2));
        let mut all: Vec<usize> = folds.iter().flat_map(|f| f.test_indices.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn class_smaller_than_k() {
        let d = labelled([vec![0; 10], vec![1; 3]].concat());
        assert!(matches!(kfold(&d, 5, 0), Err(DataError::TooFewSamples { count: 3, required: 5, .. })));
    }
}
