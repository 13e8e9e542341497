use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::matrix::Matrix;

const VAR_SMOOTHING: f64 = 1e-9;

/// Gaussian naive Bayes: one independent normal per (class, feature).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub class_priors: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Floored at `1e-9` times the largest feature variance.
    pub variances: Vec<Vec<f64>>,
}

impl NaiveBayesModel {
    pub fn log_joint_row(&self, x: &[f64]) -> Vec<f64> {
        self.class_priors
            .iter()
            .enumerate()
            .map(|(c, &prior)| {
                if prior <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                prior.ln()
                    + x.iter()
                        .zip(&self.means[c])
                        .zip(&self.variances[c])
                        .map(|((&v, &mu), &var)| {
                            -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (v - mu).powi(2) / (2.0 * var)
                        })
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        super::gboost::softmax(&self.log_joint_row(x))
    }
}

pub fn fit_gaussian_nb(x: &Matrix, labels: &[usize], n_classes: usize) -> Result<NaiveBayesModel, LearnError> {
    let (n, m) = (x.n_rows(), x.n_cols());
    if n == 0 {
        return Err(LearnError::EmptyDataset);
    }
    let max_var = (0..m)
        .map(|j| {
            let col = x.column(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64
        })
        .fold(0.0, f64::max);
    let floor = if max_var > 0.0 { VAR_SMOOTHING * max_var } else { VAR_SMOOTHING };

    let mut counts = vec![0usize; n_classes];
    let mut sums = vec![vec![0.0; m]; n_classes];
    for (row, &y) in x.rows().zip(labels) {
        counts[y] += 1;
        for (s, v) in sums[y].iter_mut().zip(row) {
            *s += v;
        }
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s.iter().map(|v| if c > 0 { v / c as f64 } else { 0.0 }).collect())
        .collect();
    let mut sq = vec![vec![0.0; m]; n_classes];
    for (row, &y) in x.rows().zip(labels) {
        for ((acc, v), mu) in sq[y].iter_mut().zip(row).zip(&means[y]) {
            *acc += (v - mu).powi(2);
        }
    }
    let variances = sq
        .iter()
        .zip(&counts)
        .map(|(s, &c)| {
            s.iter()
                .map(|v| if c > 0 { (v / c as f64).max(floor) } else { 1.0 })
                .collect()
        })
        .collect();
    let class_priors = counts.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(NaiveBayesModel {
        class_priors,
        means,
        variances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_gaussians() {
        let x = Matrix::from_vec(4, 1, vec![-1.0, 1.0, 9.0, 11.0]);
        let m = fit_gaussian_nb(&x, &[0, 0, 1, 1], 2).unwrap();
        let p = m.predict_proba_row(&[0.0]);
        assert!(p[0] > p[1]);
        assert!((m.class_priors.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_feature_is_floored() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [1.0, 4.0], [1.0, 8.0], [1.0, 12.0]]);
        let m = fit_gaussian_nb(&x, &[0, 0, 1, 1], 3).unwrap();
        assert!(m.variances.iter().flatten().all(|&v| v > 0.0));
        assert_eq!(m.class_priors[2], 0.0);
        let p = m.predict_proba_row(&[1.0, 2.0]);
        assert_eq!(p[2], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
