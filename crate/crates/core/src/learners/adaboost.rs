//! Multiclass AdaBoost (SAMME) over weighted CART stumps.
//!
//! Each round fits a weak tree to the current sample weights, scales the
//! weights of the samples it misclassified by `exp(alpha)` and renormalizes,
//! so hard (often minority-class) samples dominate later rounds.

use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, ClassTree, TreeParams};
use super::LearnError;
use crate::matrix::Matrix;

/// Alpha assigned to a weak learner with zero training error.
pub const PERFECT_ALPHA: f64 = 23.025850929940457; // ln(1e10)

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaBoostParams {
    pub n_rounds: usize,
    pub weak: TreeParams,
}

impl Default for AdaBoostParams {
    fn default() -> Self {
        Self {
            n_rounds: 50,
            weak: TreeParams::stump(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostRound {
    pub stump: ClassTree,
    pub alpha: f64,
    /// Weighted training error of this round's weak learner.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostModel {
    pub stumps: Vec<BoostRound>,
    pub n_classes: usize,
}

impl AdaBoostModel {
    /// Alpha-weighted class votes, normalized to sum to one.
    pub fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        let mut votes = vec![0.0; self.n_classes];
        for round in &self.stumps {
            votes[round.stump.predict_row(x)] += round.alpha;
        }
        let total: f64 = votes.iter().sum();
        votes.iter().map(|v| v / total).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    RoundLimit,
    PerfectLearner,
    WeakLearnerTooWeak,
}

/// What happened during boosting, round by round.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostTrace {
    pub errors: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Sample weights after each completed round's update.
    pub weights: Vec<Vec<f64>>,
    /// Which samples each round's learner got wrong.
    pub misclassified: Vec<Vec<bool>>,
    pub stop: StopReason,
}

/// `ln((1 - err) / err) + ln(K - 1)`.
pub fn samme_alpha(weighted_error: f64, n_classes: usize) -> Result<f64, LearnError> {
    if n_classes < 2 {
        return Err(LearnError::InvalidParameter(format!(
            "SAMME needs K >= 2, got {n_classes}"
        )));
    }
    let limit = 1.0 - 1.0 / n_classes as f64;
    // absorbs rounding in the summed weights
    if weighted_error >= limit - 1e-12 {
        return Err(LearnError::WeakLearnerTooWeak {
            error: weighted_error,
            limit,
        });
    }
    if weighted_error <= 0.0 {
        return Err(LearnError::PerfectLearner);
    }
    Ok(((1.0 - weighted_error) / weighted_error).ln() + ((n_classes - 1) as f64).ln())
}

pub fn fit_adaboost(
    x: &Matrix,
    labels: &[usize],
    n_classes: usize,
    params: &AdaBoostParams,
) -> Result<AdaBoostModel, LearnError> {
    fit_adaboost_traced(x, labels, n_classes, params).map(|(m, _)| m)
}

pub fn fit_adaboost_traced(
    x: &Matrix,
    labels: &[usize],
    n_classes: usize,
    params: &AdaBoostParams,
) -> Result<(AdaBoostModel, BoostTrace), LearnError> {
    let n = x.n_rows();
    if n == 0 {
        return Err(LearnError::EmptyDataset);
    }
    if params.n_rounds == 0 {
        return Err(LearnError::InvalidParameter("n_rounds must be >= 1".into()));
    }
    let mut present = vec![false; n_classes];
    for &l in labels {
        present[l] = true;
    }
    let k = present.iter().filter(|&&p| p).count().max(2);

    let mut weights = vec![1.0 / n as f64; n];
    let mut stumps = Vec::new();
    let mut trace = BoostTrace {
        errors: Vec::new(),
        alphas: Vec::new(),
        weights: Vec::new(),
        misclassified: Vec::new(),
        stop: StopReason::RoundLimit,
    };

    for _ in 0..params.n_rounds {
        let stump = fit_tree(x, labels, n_classes, Some(&weights), &params.weak)?;
        let miss: Vec<bool> = (0..n).map(|i| stump.predict_row(x.row(i)) != labels[i]).collect();
        let total: f64 = weights.iter().sum();
        let error = miss
            .iter()
            .zip(&weights)
            .filter(|(&m, _)| m)
            .map(|(_, w)| w)
            .sum::<f64>()
            / total;

        if !miss.iter().any(|&m| m) {
            stumps.push(BoostRound {
                stump,
                alpha: PERFECT_ALPHA,
                error: 0.0,
            });
            trace.errors.push(0.0);
            trace.alphas.push(PERFECT_ALPHA);
            trace.weights.push(weights.clone());
            trace.misclassified.push(miss);
            trace.stop = StopReason::PerfectLearner;
            break;
        }
        let alpha = match samme_alpha(error, k) {
            Ok(a) => a,
            Err(LearnError::WeakLearnerTooWeak { error, limit }) => {
                if stumps.is_empty() {
                    return Err(LearnError::NoUsableRound { error, limit });
                }
                trace.stop = StopReason::WeakLearnerTooWeak;
                break;
            }
            Err(e) => return Err(e),
        };
        let boost = alpha.exp();
        for (w, &m) in weights.iter_mut().zip(&miss) {
            if m {
                *w *= boost;
            }
        }
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);

        stumps.push(BoostRound { stump, alpha, error });
        trace.errors.push(error);
        trace.alphas.push(alpha);
        trace.weights.push(weights.clone());
        trace.misclassified.push(miss);
    }
    Ok((AdaBoostModel { stumps, n_classes }, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_examples() {
        // ln 3
        assert!((samme_alpha(0.25, 2).unwrap() - 1.0986).abs() < 1e-4);
        // ln 3 + ln 3
        assert!((samme_alpha(0.25, 4).unwrap() - 2.1972).abs() < 1e-4);
        assert!(matches!(samme_alpha(0.5, 2), Err(LearnError::WeakLearnerTooWeak { .. })));
        assert!(matches!(samme_alpha(0.5 - 4e-16, 2), Err(LearnError::WeakLearnerTooWeak { .. })));
        assert!(matches!(samme_alpha(0.0, 2), Err(LearnError::PerfectLearner)));
        assert!((PERFECT_ALPHA - 1e10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn separable_data_stops_after_one_round() {
        let x = Matrix::from_vec(6, 1, vec![1.0, 2.0, 3.0, 7.0, 8.0, 9.0]);
        let y = [0, 0, 0, 1, 1, 1];
        let (m, trace) = fit_adaboost_traced(&x, &y, 2, &AdaBoostParams::default()).unwrap();
        assert_eq!(m.stumps.len(), 1);
        assert_eq!(trace.stop, StopReason::PerfectLearner);
        for (i, &label) in y.iter().enumerate() {
            assert_eq!(super::super::tree::argmax(&m.predict_proba_row(x.row(i))), label);
        }
    }

    #[test]
    fn weights_stay_normalized() {
        let x = Matrix::from_vec(8, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let y = [0, 1, 0, 1, 1, 0, 1, 0];
        let (_, trace) = fit_adaboost_traced(&x, &y, 2, &AdaBoostParams::default()).unwrap();
        for w in &trace.weights {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(trace.alphas.iter().all(|&a| a > 0.0));
    }

    #[test]
    fn no_usable_round() {
        // Depth-0 learner on balanced binary labels has error exactly 0.5.
        let x = Matrix::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let params = AdaBoostParams {
            n_rounds: 5,
            weak: TreeParams::default().with_max_depth(0),
        };
        assert!(matches!(
            fit_adaboost(&x, &[0, 1, 0, 1], 2, &params),
            Err(LearnError::NoUsableRound { .. })
        ));
    }
}
