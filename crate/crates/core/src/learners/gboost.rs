//! Multiclass gradient boosting on the softmax deviance.
//!
//! Every stage fits one regression tree per class to the residuals
//! `onehot - softmax`, replaces each leaf by a one-step Newton estimate and
//! adds `learning_rate * tree(x)` to that class score.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_regression_tree, Node};
use super::LearnError;
use crate::matrix::Matrix;

const NEWTON_FLOOR: f64 = 1e-12;
const PRIOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbParams {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
}

impl Default for GbParams {
    fn default() -> Self {
        Self {
            n_stages: 100,
            learning_rate: 0.1,
            max_depth: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradBoostModel {
    pub init_log_odds: Vec<f64>,
    /// One regression tree per class per stage.
    pub stages: Vec<Vec<Node<f64>>>,
    pub learning_rate: f64,
}

impl GradBoostModel {
    pub fn scores_row(&self, x: &[f64]) -> Vec<f64> {
        let mut f = self.init_log_odds.clone();
        for stage in &self.stages {
            for (fk, tree) in f.iter_mut().zip(stage) {
                *fk += self.learning_rate * tree.leaf_for(x);
            }
        }
        f
    }

    pub fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.scores_row(x))
    }
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.iter().map(|e| e / total).collect()
}

fn log_softmax_at(scores: &[f64], k: usize) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scores[k] - lse
}

/// Mean negative log-likelihood of the true classes.
pub fn multiclass_deviance(scores: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    -scores
        .iter()
        .zip(labels)
        .map(|(s, &y)| log_softmax_at(s, y))
        .sum::<f64>()
        / n
}

/// Training deviance before any stage and after each one.
#[derive(Debug, Clone, PartialEq)]
pub struct GbTrace {
    pub deviance: Vec<f64>,
}

pub fn fit_gradient_boosting(
    x: &Matrix,
    labels: &[usize],
    n_classes: usize,
    params: &GbParams,
) -> Result<GradBoostModel, LearnError> {
    fit_gradient_boosting_traced(x, labels, n_classes, params).map(|(m, _)| m)
}

pub fn fit_gradient_boosting_traced(
    x: &Matrix,
    labels: &[usize],
    n_classes: usize,
    params: &GbParams,
) -> Result<(GradBoostModel, GbTrace), LearnError> {
    let n = x.n_rows();
    if n == 0 {
        return Err(LearnError::EmptyDataset);
    }
    if !(0.0..=1.0).contains(&params.learning_rate) {
        return Err(LearnError::InvalidParameter(format!(
            "learning_rate {} outside [0, 1]",
            params.learning_rate
        )));
    }
    let k = n_classes;
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let logs: Vec<f64> = counts
        .iter()
        .map(|&c| (c as f64 / n as f64).max(PRIOR_FLOOR).ln())
        .collect();
    let mean = logs.iter().sum::<f64>() / k as f64;
    let init_log_odds: Vec<f64> = logs.iter().map(|l| l - mean).collect();

    let mut scores: Vec<Vec<f64>> = vec![init_log_odds.clone(); n];
    let mut trace = GbTrace {
        deviance: vec![multiclass_deviance(&scores, labels)],
    };
    let newton_scale = (k as f64 - 1.0) / k as f64;
    let mut stages = Vec::with_capacity(params.n_stages);

    for _ in 0..params.n_stages {
        let probs: Vec<Vec<f64>> = scores.iter().map(|s| softmax(s)).collect();
        let trees: Vec<Node<f64>> = (0..k)
            .into_par_iter()
            .map(|c| {
                let residuals: Vec<f64> = (0..n)
                    .map(|i| f64::from(u8::from(labels[i] == c)) - probs[i][c])
                    .collect();
                grow_regression_tree(x, &residuals, params.max_depth, |positions| {
                    let (num, den) = positions.iter().fold((0.0, 0.0), |(num, den), &p| {
                        let r = residuals[p];
                        (num + r, den + r.abs() * (1.0 - r.abs()))
                    });
                    newton_scale * num / den.max(NEWTON_FLOOR)
                })
            })
            .collect();
        for (i, s) in scores.iter_mut().enumerate() {
            for (sc, tree) in s.iter_mut().zip(&trees) {
                *sc += params.learning_rate * tree.leaf_for(x.row(i));
            }
        }
        trace.deviance.push(multiclass_deviance(&scores, labels));
        stages.push(trees);
    }
    Ok((
        GradBoostModel {
            init_log_odds,
            stages,
            learning_rate: params.learning_rate,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::tree::argmax;

    #[test]
    fn init_only_predicts_majority() {
        let x = Matrix::from_vec(5, 1, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let y = [2, 2, 0, 2, 1];
        let params = GbParams {
            n_stages: 0,
            ..GbParams::default()
        };
        let m = fit_gradient_boosting(&x, &y, 3, &params).unwrap();
        assert!(m.init_log_odds.iter().sum::<f64>().abs() < 1e-12);
        for row in x.rows() {
            assert_eq!(argmax(&m.predict_proba_row(row)), 2);
        }
    }

    #[test]
    fn deviance_decreases() {
        let x = Matrix::from_vec(8, 1, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let y = [0, 0, 1, 0, 1, 1, 2, 2];
        let (_, trace) = fit_gradient_boosting_traced(&x, &y, 3, &GbParams::default()).unwrap();
        for w in trace.deviance.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, 0.0, -1000.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(argmax(&p), 0);
    }

    #[test]
    fn rejects_bad_learning_rate() {
        let x = Matrix::from_vec(2, 1, vec![0.0, 1.0]);
        let params = GbParams {
            learning_rate: 1.5,
            ..GbParams::default()
        };
        assert!(fit_gradient_boosting(&x, &[0, 1], 2, &params).is_err());
    }
}
