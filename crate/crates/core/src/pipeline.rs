//! The three-stage classifier: benign/malicious, anonymity network, application.
//!
//! Each stage is trained on its own label column with its own imputer,
//! scaler, feature subset and learner. Stages only meet at prediction time,
//! where [`Routing::Cascade`] runs stages II and III on rows that stage I
//! assigns to the gate class.

use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    apply_imputer, apply_normalizer, fit_imputer, fit_normalizer, impute_missing, ClassTaxonomy, DataError,
    Dataset, ImputeStrategy, ImputerParams, NormalizationMethod, NormalizationParams, Stage,
};
use crate::features::{rank_features, select_top_k, ScoreMethod, SelectionError, DEFAULT_BINS};
use crate::learners::{self, LearnError, LearnerSpec, TrainedModel};
use crate::matrix::Matrix;
use crate::persist::{self, PersistError};

pub const PIPELINE_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_CASCADE_GATE: &str = "Malicious";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("{stage} spec expects {expected} classes but the labels have {actual}")]
    SpecMismatch {
        stage: Stage,
        expected: usize,
        actual: usize,
    },
    #[error("{stage} dataset columns differ from stage1 columns")]
    ColumnMismatch { stage: Stage },
    #[error("pipeline needs specs for stage1, stage2 and stage3 in that order")]
    StageLayout,
    #[error("cascade gate {0:?} is not a stage1 class")]
    InvalidGate(String),
    #[error("expected {expected} columns, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

/// Which columns a stage's learner sees.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FeatureSelection {
    #[default]
    All,
    /// The `k` best columns by `method`, scored on the scaled training rows.
    Top {
        method: ScoreMethod,
        k: usize,
        #[serde(default = "default_bins")]
        n_bins: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub stage: Stage,
    pub learner: LearnerSpec,
    #[serde(default)]
    pub selection: FeatureSelection,
    #[serde(default)]
    pub normalization: NormalizationMethod,
    #[serde(default)]
    pub impute: ImputeStrategy,
    /// Label column in the input table; defaults to `label_<stage key>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_column: Option<String>,
}

impl StageSpec {
    pub fn new(stage: Stage, learner: LearnerSpec) -> Self {
        Self {
            stage,
            learner,
            selection: FeatureSelection::All,
            normalization: NormalizationMethod::default(),
            impute: ImputeStrategy::default(),
            label_column: None,
        }
    }

    pub fn with_selection(mut self, selection: FeatureSelection) -> Self {
        self.selection = selection;
        self
    }

    pub fn label_column(&self) -> String {
        self.label_column
            .clone()
            .unwrap_or_else(|| format!("label_{}", self.stage.key()))
    }
}

/// Everything fitted by [`train_stage`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageArtifacts {
    pub spec: StageSpec,
    /// Absent when rows with missing cells are dropped instead of filled.
    pub imputer: Option<ImputerParams>,
    /// Fitted over all columns of the shared namespace.
    pub normalizer: NormalizationParams,
    pub features: Vec<usize>,
    pub model: TrainedModel,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub impute_secs: f64,
    pub normalize_secs: f64,
    pub select_secs: f64,
    pub fit_secs: f64,
}

impl StageArtifacts {
    pub fn taxonomy(&self) -> &ClassTaxonomy {
        &self.model.taxonomy
    }

    /// Applies the stored imputer (or row dropping), scaler and column subset.
    pub fn transform(&self, d: &Dataset) -> Result<Dataset, PipelineError> {
        let expected = self.normalizer.per_feature.len();
        if d.n_features() != expected {
            return Err(PipelineError::ShapeMismatch {
                expected,
                actual: d.n_features(),
            });
        }
        let filled = match &self.imputer {
            Some(p) => apply_imputer(d, p)?,
            None => impute_missing(d, ImputeStrategy::DropRow)?,
        };
        Ok(apply_normalizer(&filled, &self.normalizer)?.select_features(&self.features))
    }

    /// Predicts from complete rows of the shared column namespace.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>, PipelineError> {
        let expected = self.normalizer.per_feature.len();
        if x.n_cols() != expected {
            return Err(PipelineError::ShapeMismatch {
                expected,
                actual: x.n_cols(),
            });
        }
        let scaled = self.normalizer.transform(x)?.select_cols(&self.features);
        Ok(self.model.predict(&scaled)?)
    }
}

fn expected_classes(stage: Stage) -> Option<usize> {
    ClassTaxonomy::for_stage(stage).map(|t| t.len())
}

pub fn train_stage(d: &Dataset, spec: &StageSpec, seed: u64) -> Result<StageArtifacts, PipelineError> {
    train_stage_timed(d, spec, seed).map(|(a, _)| a)
}

/// Impute, scale, rank, select, fit; in that order, all on `d` alone.
pub fn train_stage_timed(
    d: &Dataset,
    spec: &StageSpec,
    seed: u64,
) -> Result<(StageArtifacts, StageTimings), PipelineError> {
    if let Some(expected) = expected_classes(spec.stage) {
        if d.n_classes() != expected {
            return Err(PipelineError::SpecMismatch {
                stage: spec.stage,
                expected,
                actual: d.n_classes(),
            });
        }
    }
    let secs = |t: Instant| Duration::as_secs_f64(&t.elapsed());

    let t = Instant::now();
    let (imputer, filled) = match spec.impute {
        ImputeStrategy::MedianPerFeature => {
            let p = fit_imputer(d);
            let filled = apply_imputer(d, &p)?;
            (Some(p), filled)
        }
        ImputeStrategy::DropRow => (None, impute_missing(d, ImputeStrategy::DropRow)?),
    };
    let impute_secs = secs(t);

    let t = Instant::now();
    let normalizer = fit_normalizer(&filled, spec.normalization)?;
    let scaled = apply_normalizer(&filled, &normalizer)?;
    let normalize_secs = secs(t);

    let t = Instant::now();
    let features = match &spec.selection {
        FeatureSelection::All => (0..scaled.n_features()).collect(),
        FeatureSelection::Top { method, k, n_bins } => {
            select_top_k(&rank_features(&scaled, *method, *n_bins)?, *k)?
        }
    };
    let select_secs = secs(t);

    let t = Instant::now();
    let model = learners::fit(&spec.learner, &scaled.select_features(&features), seed)?
        .with_feature_subset(features.clone())?;
    let fit_secs = secs(t);

    Ok((
        StageArtifacts {
            spec: spec.clone(),
            imputer,
            normalizer,
            features,
            model,
        },
        StageTimings {
            impute_secs,
            normalize_secs,
            select_secs,
            fit_secs,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Routing {
    #[default]
    Independent,
    Cascade,
}

/// Class names assigned to one row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RoutedPrediction {
    pub stage1: String,
    pub stage2: Option<String>,
    pub stage3: Option<String>,
}

impl RoutedPrediction {
    /// `Benign`, `Malicious->Tor->Chat` and so on.
    pub fn path(&self) -> String {
        [Some(&self.stage1), self.stage2.as_ref(), self.stage3.as_ref()]
            .into_iter()
            .flatten()
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join("->")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineModel {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    /// Stage I, II and III, in order.
    pub stages: Vec<StageArtifacts>,
    pub routing: Routing,
    pub cascade_gate: String,
}

/// Trains the three stages independently (and concurrently), stage `i`
/// with seed `seed + i`.
pub fn train_pipeline(
    datasets: &[Dataset],
    specs: &[StageSpec],
    routing: Routing,
    cascade_gate: &str,
    seed: u64,
) -> Result<PipelineModel, PipelineError> {
    train_pipeline_timed(datasets, specs, routing, cascade_gate, seed).map(|(p, _)| p)
}

pub fn train_pipeline_timed(
    datasets: &[Dataset],
    specs: &[StageSpec],
    routing: Routing,
    cascade_gate: &str,
    seed: u64,
) -> Result<(PipelineModel, Vec<StageTimings>), PipelineError> {
    if datasets.len() != 3 || specs.len() != 3 || specs.iter().map(|s| s.stage).ne(Stage::PIPELINE) {
        return Err(PipelineError::StageLayout);
    }
    let names = datasets[0].feature_names();
    for (d, stage) in datasets.iter().zip(Stage::PIPELINE).skip(1) {
        if d.feature_names() != names {
            return Err(PipelineError::ColumnMismatch { stage });
        }
    }
    if datasets[0].taxonomy().index_of(cascade_gate).is_none() {
        return Err(PipelineError::InvalidGate(cascade_gate.to_string()));
    }
    let trained = datasets
        .par_iter()
        .zip(specs)
        .enumerate()
        .map(|(i, (d, spec))| train_stage_timed(d, spec, seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let (stages, timings) = trained.into_iter().unzip();
    Ok((
        PipelineModel {
            format_version: PIPELINE_FORMAT_VERSION,
            feature_names: names.to_vec(),
            stages,
            routing,
            cascade_gate: cascade_gate.to_string(),
        },
        timings,
    ))
}

impl PipelineModel {
    pub fn stage(&self, stage: Stage) -> Option<&StageArtifacts> {
        stage.index().and_then(|i| self.stages.get(i))
    }

    pub fn with_routing(mut self, routing: Routing) -> Self {
        self.routing = routing;
        self
    }

    fn names(&self, stage: usize, preds: &[usize]) -> Vec<String> {
        let tax = self.stages[stage].taxonomy();
        preds.iter().map(|&p| tax.name(p).unwrap().to_string()).collect()
    }

    /// Per-row class names under the model's routing mode.
    pub fn predict_routed(&self, x: &Matrix) -> Result<Vec<RoutedPrediction>, PipelineError> {
        if x.n_cols() != self.feature_names.len() {
            return Err(PipelineError::ShapeMismatch {
                expected: self.feature_names.len(),
                actual: x.n_cols(),
            });
        }
        let first = self.names(0, &self.stages[0].predict(x)?);
        let rows: Vec<usize> = match self.routing {
            Routing::Independent => (0..x.n_rows()).collect(),
            Routing::Cascade => (0..x.n_rows()).filter(|&i| first[i] == self.cascade_gate).collect(),
        };
        let mut downstream = [vec![None; x.n_rows()], vec![None; x.n_rows()]];
        if !rows.is_empty() {
            let sub = x.select_rows(&rows);
            for (s, out) in downstream.iter_mut().enumerate() {
                let names = self.names(s + 1, &self.stages[s + 1].predict(&sub)?);
                for (&r, name) in rows.iter().zip(names) {
                    out[r] = Some(name);
                }
            }
        }
        let [second, third] = downstream;
        Ok(first
            .into_iter()
            .zip(second)
            .zip(third)
            .map(|((stage1, stage2), stage3)| RoutedPrediction { stage1, stage2, stage3 })
            .collect())
    }

    pub fn to_json(&self) -> Result<String, PersistError> {
        persist::to_json_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self, PersistError> {
        persist::from_json_str(text, PIPELINE_FORMAT_VERSION)
    }
}

pub fn save_pipeline(p: &PipelineModel, path: &Path) -> Result<(), PersistError> {
    persist::save_json(p, path)
}

pub fn load_pipeline(path: &Path) -> Result<PipelineModel, PersistError> {
    persist::load_json(path, PIPELINE_FORMAT_VERSION)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::TreeParams;

    fn data(stage: Stage) -> Dataset {
        let tax = ClassTaxonomy::for_stage(stage).unwrap();
        let k = tax.len();
        let rows: Vec<[f64; 3]> = (0..40)
            .map(|i| [(i % k) as f64 * 3.0 + (i % 5) as f64 * 0.1, (i % 3) as f64, (i * 7 % 11) as f64])
            .collect();
        let labels = (0..40).map(|i| i % k).collect();
        Dataset::new(
            Matrix::from_rows(&rows),
            vec!["a".into(), "b".into(), "c".into()],
            labels,
            tax,
        )
        .unwrap()
    }

    fn tree_spec(stage: Stage) -> StageSpec {
        StageSpec::new(stage, LearnerSpec::DecisionTree(TreeParams::default()))
    }

    #[test]
    fn all_features_bypass() {
        let a = train_stage(&data(Stage::StageII), &tree_spec(Stage::StageII), 1).unwrap();
        assert_eq!(a.features, vec![0, 1, 2]);
        assert_eq!(a.model.feature_subset, vec![0, 1, 2]);
    }

    #[test]
    fn top_k_selection_finds_label_feature() {
        let spec = tree_spec(Stage::StageIII).with_selection(FeatureSelection::Top {
            method: ScoreMethod::Fisher,
            k: 1,
            n_bins: 10,
        });
        let a = train_stage(&data(Stage::StageIII), &spec, 1).unwrap();
        assert_eq!(a.features, vec![0]);
    }

    #[test]
    fn taxonomy_guard() {
        let err = train_stage(&data(Stage::StageII), &tree_spec(Stage::StageI), 0).unwrap_err();
        assert!(matches!(
            err,
            PipelineError::SpecMismatch {
                expected: 2,
                actual: 4,
                ..
            }
        ));
    }

    #[test]
    fn routing_modes() {
        let ds: Vec<Dataset> = Stage::PIPELINE.iter().map(|&s| data(s)).collect();
        let specs: Vec<StageSpec> = Stage::PIPELINE.iter().map(|&s| tree_spec(s)).collect();
        let p = train_pipeline(&ds, &specs, Routing::Independent, DEFAULT_CASCADE_GATE, 9).unwrap();
        let x = ds[0].features();
        let ind = p.predict_routed(x).unwrap();
        assert!(ind.iter().all(|r| r.stage2.is_some() && r.stage3.is_some()));
        let cas = p.clone().with_routing(Routing::Cascade).predict_routed(x).unwrap();
        for (c, i) in cas.iter().zip(&ind) {
            assert_eq!(c.stage1, i.stage1);
            if c.stage1 == "Malicious" {
                assert_eq!((&c.stage2, &c.stage3), (&i.stage2, &i.stage3));
            } else {
                assert_eq!((&c.stage2, &c.stage3), (&None, &None));
            }
        }
        assert!(cas.iter().any(|r| r.stage2.is_none()));
        assert_eq!(
            RoutedPrediction {
                stage1: "Malicious".into(),
                stage2: Some("Tor".into()),
                stage3: Some("Chat".into())
            }
            .path(),
            "Malicious->Tor->Chat"
        );
    }

    #[test]
    fn layout_and_gate_checks() {
        let ds: Vec<Dataset> = Stage::PIPELINE.iter().map(|&s| data(s)).collect();
        let specs: Vec<StageSpec> = Stage::PIPELINE.iter().map(|&s| tree_spec(s)).collect();
        assert!(matches!(
            train_pipeline(&ds, &specs, Routing::Cascade, "Evil", 0),
            Err(PipelineError::InvalidGate(_))
        ));
        let mut swapped = specs.clone();
        swapped.swap(1, 2);
        assert!(matches!(
            train_pipeline(&ds, &swapped, Routing::Cascade, "Malicious", 0),
            Err(PipelineError::StageLayout)
        ));
        let mut renamed = ds.clone();
        renamed[2] = renamed[2].select_features(&[0, 2, 1]);
        assert!(matches!(
            train_pipeline(&renamed, &specs, Routing::Cascade, "Malicious", 0),
            Err(PipelineError::ColumnMismatch { stage: Stage::StageIII })
        ));
    }
}
