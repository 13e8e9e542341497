//! Confusion matrices, accuracy/precision/recall/F1, cross-validation and
//! the stage-wise comparison table.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{kfold, ClassTaxonomy, Dataset, SplitPlan, Stage};
use crate::pipeline::{train_stage, PipelineError, StageArtifacts, StageSpec};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{truth} true labels vs {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("class index {index} outside a {n_classes}-class taxonomy")]
    IndexOutOfRange { index: usize, n_classes: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub taxonomy: ClassTaxonomy,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    fn column_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }
}

pub fn confusion_matrix(
    y_true: &[usize],
    y_pred: &[usize],
    taxonomy: &ClassTaxonomy,
) -> Result<ConfusionMatrix, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: y_true.len(),
            predicted: y_pred.len(),
        });
    }
    let k = taxonomy.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if let Some(&index) = [t, p].iter().find(|&&i| i >= k) {
            return Err(EvalError::IndexOutOfRange { index, n_classes: k });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        taxonomy: taxonomy.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<u64>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Support-weighted averages, reported alongside the macro headline.
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Per-class and averaged metrics. A class with no predictions (or no true
/// members) scores 0 for the undefined ratio and still counts in the macro mean.
pub fn metrics_from_confusion(c: &ConfusionMatrix) -> Result<MetricsReport, EvalError> {
    let total = c.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let k = c.n_classes();
    let support: Vec<u64> = c.counts.iter().map(|r| r.iter().sum()).collect();
    let precision: Vec<f64> = (0..k).map(|i| ratio(c.counts[i][i], c.column_sum(i))).collect();
    let recall: Vec<f64> = (0..k).map(|i| ratio(c.counts[i][i], support[i])).collect();
    let f1: Vec<f64> = precision.iter().zip(&recall).map(|(&p, &r)| harmonic(p, r)).collect();
    let weighted = |v: &[f64]| {
        v.iter()
            .zip(&support)
            .map(|(x, &s)| x * s as f64)
            .sum::<f64>()
            / total as f64
    };
    Ok(MetricsReport {
        accuracy: ratio(c.trace(), total),
        macro_precision: mean(&precision),
        macro_recall: mean(&recall),
        macro_f1: mean(&f1),
        weighted_precision: weighted(&precision),
        weighted_recall: weighted(&recall),
        weighted_f1: weighted(&f1),
        precision,
        recall,
        f1,
        support,
        confusion: c.clone(),
    })
}

pub fn evaluate_labels(
    y_true: &[usize],
    y_pred: &[usize],
    taxonomy: &ClassTaxonomy,
) -> Result<MetricsReport, EvalError> {
    metrics_from_confusion(&confusion_matrix(y_true, y_pred, taxonomy)?)
}

/// Micro-averaged precision, recall and F1 (pooled TP/FP/FN).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroAverages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn micro_averages(c: &ConfusionMatrix) -> MicroAverages {
    let tp = c.trace();
    let fp: u64 = (0..c.n_classes()).map(|j| c.column_sum(j) - c.counts[j][j]).sum();
    let fn_: u64 = (0..c.n_classes())
        .map(|i| c.counts[i].iter().sum::<u64>() - c.counts[i][i])
        .sum();
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    MicroAverages {
        precision,
        recall,
        f1: harmonic(precision, recall),
    }
}

/// Applies a trained stage to `d` (raw columns) and scores it.
pub fn evaluate_stage(artifacts: &StageArtifacts, d: &Dataset) -> Result<MetricsReport, EvalError> {
    let prepared = artifacts.transform(d)?;
    let predicted = artifacts
        .model
        .predict(prepared.features())
        .map_err(PipelineError::from)?;
    evaluate_labels(prepared.labels(), &predicted, artifacts.taxonomy())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub plan: SplitPlan,
    pub artifacts: StageArtifacts,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation across folds.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let m = mean(values);
        let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64;
        Self { mean: m, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub accuracy: MeanStd,
    pub macro_precision: MeanStd,
    pub macro_recall: MeanStd,
    pub macro_f1: MeanStd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub folds: Vec<FoldResult>,
    pub summary: CvSummary,
}

pub fn summarize(reports: &[&MetricsReport]) -> CvSummary {
    let of = |f: fn(&MetricsReport) -> f64| MeanStd::of(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
    CvSummary {
        accuracy: of(|r| r.accuracy),
        macro_precision: of(|r| r.macro_precision),
        macro_recall: of(|r| r.macro_recall),
        macro_f1: of(|r| r.macro_f1),
    }
}

/// Stratified k-fold cross-validation. Every fold refits the whole stage
/// (imputer, scaler, ranking, learner) on its training rows only; fold `i`
/// trains with seed `seed + i`.
pub fn cross_validate(d: &Dataset, spec: &StageSpec, k: usize, seed: u64) -> Result<CvResult, EvalError> {
    let plans = kfold(d, k, seed).map_err(PipelineError::from)?;
    let folds = plans
        .into_par_iter()
        .enumerate()
        .map(|(fold, plan)| {
            let train = d.subset_rows(&plan.train_indices);
            let test = d.subset_rows(&plan.test_indices);
            let artifacts = train_stage(&train, spec, seed.wrapping_add(fold as u64))?;
            let report = evaluate_stage(&artifacts, &test)?;
            Ok(FoldResult {
                fold,
                plan,
                artifacts,
                report,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let summary = summarize(&folds.iter().map(|f| &f.report).collect::<Vec<_>>());
    Ok(CvResult { folds, summary })
}

/// One line of the stage-wise comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub algorithm: String,
    pub stage: Stage,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
    #[serde(alias = "aligned_text")]
    Text,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Some(ReportFormat::Csv),
            "json" => Some(ReportFormat::Json),
            "text" | "txt" | "aligned" => Some(ReportFormat::Text),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Text => "txt",
        }
    }
}

/// `100 * value` with four decimals, e.g. `0.997491` becomes `99.7491`.
pub fn format_percent(value: f64) -> String {
    format!("{:.4}", value * 100.0)
}

const HEADER: [&str; 6] = ["algorithm", "stage", "accuracy", "f1", "precision", "recall"];

fn stage_order(stage: Stage) -> usize {
    stage.index().unwrap_or(usize::MAX)
}

/// Renders rows ordered by stage, then accuracy (highest first), then name.
pub fn emit_comparison(rows: &[ComparisonRow], format: ReportFormat) -> String {
    let mut sorted: Vec<&ComparisonRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        stage_order(a.stage)
            .cmp(&stage_order(b.stage))
            .then(b.report.accuracy.total_cmp(&a.report.accuracy))
            .then_with(|| a.algorithm.cmp(&b.algorithm))
    });
    let cells: Vec<[String; 6]> = sorted
        .iter()
        .map(|r| {
            [
                r.algorithm.clone(),
                r.stage.report_label().to_string(),
                format_percent(r.report.accuracy),
                format_percent(r.report.macro_f1),
                format_percent(r.report.macro_precision),
                format_percent(r.report.macro_recall),
            ]
        })
        .collect();
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(HEADER).expect("in-memory write");
            for row in &cells {
                w.write_record(row).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
        }
        ReportFormat::Json => {
            let values: Vec<serde_json::Value> = sorted
                .iter()
                .zip(&cells)
                .map(|(r, c)| {
                    let pct = |s: &str| serde_json::Value::from(s.parse::<f64>().expect("formatted number"));
                    serde_json::json!({
                        "algorithm": c[0],
                        "stage": c[1],
                        "accuracy": pct(&c[2]),
                        "f1": pct(&c[3]),
                        "precision": pct(&c[4]),
                        "recall": pct(&c[5]),
                        "weighted_f1": pct(&format_percent(r.report.weighted_f1)),
                        "weighted_precision": pct(&format_percent(r.report.weighted_precision)),
                        "weighted_recall": pct(&format_percent(r.report.weighted_recall)),
                    })
                })
                .collect();
            let mut out = serde_json::to_string_pretty(&values).expect("json values serialize");
            out.push('\n');
            out
        }
        ReportFormat::Text => {
            let mut widths = HEADER.map(str::len);
            for row in &cells {
                for (w, c) in widths.iter_mut().zip(row) {
                    *w = (*w).max(c.chars().count());
                }
            }
            let mut out = String::new();
            let mut line = |row: &[&str]| {
                let mut text = String::new();
                for (i, (c, w)) in row.iter().zip(widths).enumerate() {
                    if i > 0 {
                        text.push_str("  ");
                    }
                    // names left-aligned, numbers right-aligned
                    if i < 2 {
                        let _ = write!(text, "{c:<w$}");
                    } else {
                        let _ = write!(text, "{c:>w$}");
                    }
                }
                out.push_str(text.trim_end());
                out.push('\n');
            };
            line(&HEADER);
            for row in &cells {
                line(&row.each_ref().map(String::as_str));
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(counts: [[u64; 2]; 2]) -> ConfusionMatrix {
        ConfusionMatrix {
            counts: counts.iter().map(|r| r.to_vec()).collect(),
            taxonomy: ClassTaxonomy::stage_one(),
        }
    }

    #[test]
    fn hand_computed_binary_metrics() {
        let m = metrics_from_confusion(&binary([[50, 10], [5, 35]])).unwrap();
        assert!((m.accuracy - 0.85).abs() < 1e-12);
        assert!((m.precision[1] - 35.0 / 45.0).abs() < 1e-12);
        assert!((m.recall[1] - 0.875).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_anti_diagonal() {
        let tax = ClassTaxonomy::stage_one();
        let c = confusion_matrix(&[0, 1, 1], &[0, 1, 1], &tax).unwrap();
        assert_eq!(c.counts, vec![vec![1, 0], vec![0, 2]]);
        let m = metrics_from_confusion(&c).unwrap();
        assert_eq!((m.accuracy, m.macro_f1, m.macro_precision, m.macro_recall), (1.0, 1.0, 1.0, 1.0));
        let anti = confusion_matrix(&[0, 1], &[1, 0], &tax).unwrap();
        assert_eq!(anti.counts, vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn absent_class_scores_zero() {
        let tax = ClassTaxonomy::stage_two();
        let m = evaluate_labels(&[0, 1, 1], &[0, 1, 1], &tax).unwrap();
        assert_eq!((m.precision[3], m.recall[3], m.f1[3]), (0.0, 0.0, 0.0));
        assert!((m.macro_f1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let tax = ClassTaxonomy::stage_one();
        assert!(matches!(confusion_matrix(&[0], &[0, 1], &tax), Err(EvalError::LengthMismatch { .. })));
        assert!(matches!(
            confusion_matrix(&[0], &[2], &tax),
            Err(EvalError::IndexOutOfRange { index: 2, n_classes: 2 })
        ));
        assert!(matches!(metrics_from_confusion(&binary([[0, 0], [0, 0]])), Err(EvalError::EmptyMatrix)));
    }

    fn row(name: &str, stage: Stage, acc_counts: [[u64; 2]; 2]) -> ComparisonRow {
        ComparisonRow {
            algorithm: name.into(),
            stage,
            report: metrics_from_confusion(&binary(acc_counts)).unwrap(),
        }
    }

    #[test]
    fn percent_rendering() {
        assert_eq!(format_percent(0.997491), "99.7491");
        assert_eq!(format_percent(1.0), "100.0000");
    }

    #[test]
    fn comparison_sort_and_formats() {
        let rows = vec![
            row("KNN", Stage::StageII, [[5, 5], [5, 5]]),
            row("Random Forest", Stage::StageI, [[9, 1], [0, 10]]),
            row("AdaBoost", Stage::StageI, [[10, 0], [0, 10]]),
        ];
        let csv = emit_comparison(&rows, ReportFormat::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "algorithm,stage,accuracy,f1,precision,recall");
        assert!(lines[1].starts_with("AdaBoost,DTC 1,100.0000"));
        assert!(lines[2].starts_with("Random Forest,DTC 1,95.0000"));
        assert!(lines[3].starts_with("KNN,DTC 2,50.0000"));

        let json: serde_json::Value = serde_json::from_str(&emit_comparison(&rows, ReportFormat::Json)).unwrap();
        assert_eq!(json[1]["accuracy"], serde_json::json!(95.0));

        let text = emit_comparison(&rows, ReportFormat::Text);
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().all(|l| !l.ends_with(' ')));
    }

    #[test]
    fn empty_comparison_is_header_only() {
        assert_eq!(emit_comparison(&[], ReportFormat::Csv), "algorithm,stage,accuracy,f1,precision,recall\n");
        assert_eq!(emit_comparison(&[], ReportFormat::Json).trim(), "[]");
        assert_eq!(emit_comparison(&[], ReportFormat::Text).lines().count(), 1);
    }

    #[test]
    fn micro_equals_accuracy() {
        let c = ConfusionMatrix {
            counts: vec![vec![3, 1, 0], vec![2, 5, 1], vec![0, 4, 7]],
            taxonomy: ClassTaxonomy::custom(["a", "b", "c"]).unwrap(),
        };
        let micro = micro_averages(&c);
        let acc = metrics_from_confusion(&c).unwrap().accuracy;
        assert!((micro.precision - acc).abs() < 1e-12 && (micro.recall - acc).abs() < 1e-12);
    }
}
