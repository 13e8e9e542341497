use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

/// Euclidean nearest-neighbour vote over the stored training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub train: Matrix,
    pub labels: Vec<usize>,
    pub k: usize,
    pub n_classes: usize,
}

impl KnnModel {
    /// The `k` nearest training rows as `(distance, row)`, closest first,
    /// equal distances ordered by row index.
    pub fn neighbours(&self, x: &[f64]) -> Vec<(f64, usize)> {
        let mut d: Vec<(f64, usize)> = self
            .train
            .rows()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, order);
            d.truncate(self.k);
        }
        d.sort_by(order);
        d.into_iter().map(|(sq, i)| (sq.sqrt(), i)).collect()
    }

    /// Neighbour vote fractions.
    pub fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        let mut votes = vec![0.0; self.n_classes];
        for (_, i) in self.neighbours(x) {
            votes[self.labels[i]] += 1.0;
        }
        votes.iter().map(|v| v / self.k as f64).collect()
    }

    /// Majority label; ties go to the class with the smaller summed
    /// neighbour distance, then to the lower class index.
    pub fn predict_row(&self, x: &[f64]) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        let mut dist = vec![0.0; self.n_classes];
        for (d, i) in self.neighbours(x) {
            votes[self.labels[i]] += 1;
            dist[self.labels[i]] += d;
        }
        let mut best = 0;
        for c in 1..self.n_classes {
            if votes[c] > votes[best] || (votes[c] == votes[best] && dist[c] < dist[best]) {
                best = c;
            }
        }
        best
    }
}

pub fn fit_knn(x: &Matrix, labels: &[usize], n_classes: usize, params: &KnnParams) -> Result<KnnModel, LearnError> {
    if x.n_rows() == 0 {
        return Err(LearnError::EmptyDataset);
    }
    if params.k == 0 || params.k > x.n_rows() {
        return Err(LearnError::KTooLarge {
            k: params.k,
            n_samples: x.n_rows(),
        });
    }
    Ok(KnnModel {
        train: x.clone(),
        labels: labels.to_vec(),
        k: params.k,
        n_classes,
    })
}
