//! The six classifiers behind one fit/predict contract.
//!
//! [`LearnerSpec`] names a learner and its hyperparameters; [`fit`] turns it
//! into an immutable [`TrainedModel`] that remembers the taxonomy it was
//! trained on and which columns of the shared feature namespace it expects.

pub mod adaboost;
pub mod bayes;
pub mod forest;
pub mod gboost;
pub mod knn;
pub mod tree;

use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adaboost::{fit_adaboost, fit_adaboost_traced, samme_alpha, AdaBoostModel, AdaBoostParams, BoostTrace};
pub use bayes::{fit_gaussian_nb, NaiveBayesModel};
pub use forest::{fit_forest, ForestModel, ForestParams};
pub use gboost::{fit_gradient_boosting, fit_gradient_boosting_traced, GbParams, GbTrace, GradBoostModel};
pub use knn::{fit_knn, KnnModel, KnnParams};
pub use tree::{fit_tree, ClassTree, ClassWeight, SplitCriterion, TreeNode, TreeParams};

use crate::data::{ClassTaxonomy, Dataset};
use crate::matrix::Matrix;
use crate::persist::{self, PersistError};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnError {
    #[error("dataset has no samples")]
    EmptyDataset,
    #[error("impurity of an empty node is undefined")]
    EmptyNode,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("weak learner error {error} is not below {limit}")]
    WeakLearnerTooWeak { error: f64, limit: f64 },
    #[error("weak learner has zero training error")]
    PerfectLearner,
    #[error("first boosting round already has error {error} >= {limit}")]
    NoUsableRound { error: f64, limit: f64 },
    #[error("k = {k} but only {n_samples} training samples")]
    KTooLarge { k: usize, n_samples: usize },
    #[error("expected {expected} columns, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("dataset still has missing values; impute first")]
    MaskedData,
}

/// Which learner to train, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    AdaBoost(AdaBoostParams),
    GradientBoosting(GbParams),
    GaussianNb,
    Knn(KnnParams),
}

impl LearnerSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            LearnerSpec::DecisionTree(_) => ModelKind::DecisionTree,
            LearnerSpec::RandomForest(_) => ModelKind::RandomForest,
            LearnerSpec::AdaBoost(_) => ModelKind::AdaBoost,
            LearnerSpec::GradientBoosting(_) => ModelKind::GradientBoosting,
            LearnerSpec::GaussianNb => ModelKind::GaussianNb,
            LearnerSpec::Knn(_) => ModelKind::Knn,
        }
    }

    /// Spec with default hyperparameters for `kind`.
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::DecisionTree => LearnerSpec::DecisionTree(TreeParams::default()),
            ModelKind::RandomForest => LearnerSpec::RandomForest(ForestParams::default()),
            ModelKind::AdaBoost => LearnerSpec::AdaBoost(AdaBoostParams::default()),
            ModelKind::GradientBoosting => LearnerSpec::GradientBoosting(GbParams::default()),
            ModelKind::GaussianNb => LearnerSpec::GaussianNb,
            ModelKind::Knn => LearnerSpec::Knn(KnnParams::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DecisionTree,
    RandomForest,
    AdaBoost,
    GradientBoosting,
    GaussianNb,
    Knn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::DecisionTree,
        ModelKind::RandomForest,
        ModelKind::AdaBoost,
        ModelKind::GradientBoosting,
        ModelKind::GaussianNb,
        ModelKind::Knn,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::RandomForest => "random_forest",
            ModelKind::AdaBoost => "ada_boost",
            ModelKind::GradientBoosting => "gradient_boosting",
            ModelKind::GaussianNb => "gaussian_nb",
            ModelKind::Knn => "knn",
        }
    }

    /// Name used in comparison reports.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::DecisionTree => "Decision Trees",
            ModelKind::RandomForest => "Random Forest",
            ModelKind::AdaBoost => "AdaBoost",
            ModelKind::GradientBoosting => "Gradient Boosting",
            ModelKind::GaussianNb => "Naive Bayes",
            ModelKind::Knn => "KNN",
        }
    }

    /// Accepts the snake_case key or a few common spellings.
    pub fn parse(s: &str) -> Option<Self> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match norm.as_str() {
            "decisiontree" | "decisiontrees" | "dt" | "tree" | "cart" => Some(ModelKind::DecisionTree),
            "randomforest" | "rf" | "forest" => Some(ModelKind::RandomForest),
            "adaboost" | "ada" => Some(ModelKind::AdaBoost),
            "gradientboosting" | "gb" | "gbm" => Some(ModelKind::GradientBoosting),
            "gaussiannb" | "naivebayes" | "nb" | "gnb" => Some(ModelKind::GaussianNb),
            "knn" => Some(ModelKind::Knn),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum ModelStructure {
    DecisionTree(ClassTree),
    RandomForest(ForestModel),
    AdaBoost(AdaBoostModel),
    GradientBoosting(GradBoostModel),
    GaussianNb(NaiveBayesModel),
    Knn(KnnModel),
}

/// A fitted learner plus everything needed to apply it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub learner: LearnerSpec,
    pub taxonomy: ClassTaxonomy,
    /// Columns of the shared feature namespace, in the order the model reads them.
    pub feature_subset: Vec<usize>,
    pub seed: u64,
    pub structure: ModelStructure,
}

/// Fits `spec` on a feature matrix and label vector.
pub fn fit_matrix(
    spec: &LearnerSpec,
    x: &Matrix,
    labels: &[usize],
    taxonomy: &ClassTaxonomy,
    seed: u64,
) -> Result<TrainedModel, LearnError> {
    if x.n_rows() == 0 {
        return Err(LearnError::EmptyDataset);
    }
    if labels.len() != x.n_rows() {
        return Err(LearnError::ShapeMismatch {
            expected: x.n_rows(),
            actual: labels.len(),
        });
    }
    let k = taxonomy.len();
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(LearnError::InvalidParameter(format!(
            "label index {bad} outside a {k}-class taxonomy"
        )));
    }
    let structure = match spec {
        LearnerSpec::DecisionTree(p) => ModelStructure::DecisionTree(fit_tree(x, labels, k, None, p)?),
        LearnerSpec::RandomForest(p) => ModelStructure::RandomForest(fit_forest(x, labels, k, p, seed)?),
        LearnerSpec::AdaBoost(p) => ModelStructure::AdaBoost(fit_adaboost(x, labels, k, p)?),
        LearnerSpec::GradientBoosting(p) => {
            ModelStructure::GradientBoosting(fit_gradient_boosting(x, labels, k, p)?)
        }
        LearnerSpec::GaussianNb => ModelStructure::GaussianNb(fit_gaussian_nb(x, labels, k)?),
        LearnerSpec::Knn(p) => ModelStructure::Knn(fit_knn(x, labels, k, p)?),
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        learner: spec.clone(),
        taxonomy: taxonomy.clone(),
        feature_subset: (0..x.n_cols()).collect(),
        seed,
        structure,
    })
}

fn clean(d: &Dataset) -> Result<(), LearnError> {
    if d.n_samples() == 0 {
        return Err(LearnError::EmptyDataset);
    }
    if d.has_missing() {
        return Err(LearnError::MaskedData);
    }
    Ok(())
}

/// Fits `spec` on every column of a clean dataset.
pub fn fit(spec: &LearnerSpec, d: &Dataset, seed: u64) -> Result<TrainedModel, LearnError> {
    clean(d)?;
    fit_matrix(spec, d.features(), d.labels(), d.taxonomy(), seed)
}

pub fn train_decision_tree(
    d: &Dataset,
    params: &TreeParams,
    sample_weights: Option<&[f64]>,
) -> Result<TrainedModel, LearnError> {
    clean(d)?;
    let tree = fit_tree(d.features(), d.labels(), d.n_classes(), sample_weights, params)?;
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        learner: LearnerSpec::DecisionTree(params.clone()),
        taxonomy: d.taxonomy().clone(),
        feature_subset: (0..d.n_features()).collect(),
        seed: 0,
        structure: ModelStructure::DecisionTree(tree),
    })
}

pub fn train_random_forest(d: &Dataset, params: &ForestParams, seed: u64) -> Result<TrainedModel, LearnError> {
    fit(&LearnerSpec::RandomForest(params.clone()), d, seed)
}

pub fn train_adaboost(d: &Dataset, params: &AdaBoostParams) -> Result<TrainedModel, LearnError> {
    fit(&LearnerSpec::AdaBoost(params.clone()), d, 0)
}

pub fn train_gradient_boosting(d: &Dataset, params: &GbParams) -> Result<TrainedModel, LearnError> {
    fit(&LearnerSpec::GradientBoosting(params.clone()), d, 0)
}

pub fn train_gaussian_nb(d: &Dataset) -> Result<TrainedModel, LearnError> {
    fit(&LearnerSpec::GaussianNb, d, 0)
}

pub fn train_knn(d: &Dataset, k: usize) -> Result<TrainedModel, LearnError> {
    fit(&LearnerSpec::Knn(KnnParams { k }), d, 0)
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.learner.kind()
    }

    pub fn n_classes(&self) -> usize {
        self.taxonomy.len()
    }

    /// Records which shared-namespace columns the model was trained on.
    pub fn with_feature_subset(mut self, subset: Vec<usize>) -> Result<Self, LearnError> {
        if subset.len() != self.feature_subset.len() {
            return Err(LearnError::ShapeMismatch {
                expected: self.feature_subset.len(),
                actual: subset.len(),
            });
        }
        self.feature_subset = subset;
        Ok(self)
    }

    fn check_width(&self, x: &Matrix) -> Result<(), LearnError> {
        if x.n_cols() != self.feature_subset.len() {
            return Err(LearnError::ShapeMismatch {
                expected: self.feature_subset.len(),
                actual: x.n_cols(),
            });
        }
        Ok(())
    }

    pub fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        match &self.structure {
            ModelStructure::DecisionTree(t) => t.predict_proba_row(x),
            ModelStructure::RandomForest(f) => f.predict_proba_row(x),
            ModelStructure::AdaBoost(a) => a.predict_proba_row(x),
            ModelStructure::GradientBoosting(g) => g.predict_proba_row(x),
            ModelStructure::GaussianNb(nb) => nb.predict_proba_row(x),
            ModelStructure::Knn(k) => k.predict_proba_row(x),
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> usize {
        match &self.structure {
            ModelStructure::DecisionTree(t) => t.predict_row(x),
            ModelStructure::Knn(k) => k.predict_row(x),
            _ => tree::argmax(&self.predict_proba_row(x)),
        }
    }

    /// One class index per row of `x`.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>, LearnError> {
        self.check_width(x)?;
        Ok((0..x.n_rows()).into_par_iter().map(|i| self.predict_row(x.row(i))).collect())
    }

    /// Row-stochastic `n_rows × n_classes` matrix.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix, LearnError> {
        self.check_width(x)?;
        let rows: Vec<Vec<f64>> = (0..x.n_rows())
            .into_par_iter()
            .map(|i| self.predict_proba_row(x.row(i)))
            .collect();
        Ok(Matrix::from_vec(
            x.n_rows(),
            self.n_classes(),
            rows.into_iter().flatten().collect(),
        ))
    }

    pub fn to_json(&self) -> Result<String, PersistError> {
        persist::to_json_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self, PersistError> {
        persist::from_json_str(text, MODEL_FORMAT_VERSION)
    }

    pub fn save(&self, path: &Path) -> Result<(), PersistError> {
        persist::save_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self, PersistError> {
        persist::load_json(path, MODEL_FORMAT_VERSION)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.5], [2.0, 0.2], [3.0, 0.9], [4.0, 0.1], [5.0, 0.4]]);
        Dataset::new(
            x,
            vec!["a".into(), "b".into()],
            vec![0, 0, 0, 1, 1, 1],
            ClassTaxonomy::stage_one(),
        )
        .unwrap()
    }

    #[test]
    fn spec_json_uses_kind_tag() {
        let spec: LearnerSpec = serde_json::from_str(r#"{"kind":"random_forest","n_trees":7}"#).unwrap();
        match spec {
            LearnerSpec::RandomForest(p) => {
                assert_eq!(p.n_trees, 7);
                assert!(p.bootstrap);
            }
            other => panic!("{other:?}"),
        }
        let nb: LearnerSpec = serde_json::from_str(r#"{"kind":"gaussian_nb"}"#).unwrap();
        assert_eq!(nb, LearnerSpec::GaussianNb);
    }

    #[test]
    fn every_learner_round_trips() {
        let d = toy();
        for kind in ModelKind::ALL {
            let spec = match kind {
                ModelKind::Knn => LearnerSpec::Knn(KnnParams { k: 3 }),
                other => LearnerSpec::default_for(other),
            };
            let m = fit(&spec, &d, 3).unwrap();
            let back = TrainedModel::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back, m, "{kind}");
            assert_eq!(back.predict(d.features()).unwrap(), m.predict(d.features()).unwrap());
        }
    }

    #[test]
    fn width_mismatch() {
        let m = train_gaussian_nb(&toy()).unwrap();
        let x = Matrix::zeros(2, 3);
        assert_eq!(
            m.predict(&x),
            Err(LearnError::ShapeMismatch { expected: 2, actual: 3 })
        );
    }

    #[test]
    fn kind_parsing() {
        for kind in ModelKind::ALL {
            assert_eq!(ModelKind::parse(kind.key()), Some(kind));
            assert_eq!(ModelKind::parse(kind.display_name()), Some(kind));
        }
        assert_eq!(ModelKind::parse("xgboost"), None);
    }
}
