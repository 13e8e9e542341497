//! Univariate feature scoring: information gain, Fisher score and the
//! chi-square statistic, plus ranking and top-k selection.
//!
//! Information gain and chi-square need a categorical view of each continuous
//! feature; both use equal-frequency (quantile) bins so heavy-tailed flow
//! statistics still spread across bins.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SelectionError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {features} feature values vs {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("label {label} outside 0..{n_classes}")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("fisher score needs at least two classes present")]
    SingleClass,
    #[error("k = {k} outside 1..={n_features}")]
    OutOfRange { k: usize, n_features: usize },
    #[error("dataset contains missing cells; impute first")]
    MaskedData,
    #[error("n_bins must be at least 2, got {0}")]
    TooFewBins(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMethod {
    InfoGain,
    Fisher,
    ChiSquare,
}

impl ScoreMethod {
    pub const ALL: [ScoreMethod; 3] = [ScoreMethod::InfoGain, ScoreMethod::Fisher, ScoreMethod::ChiSquare];

    pub fn name(self) -> &'static str {
        match self {
            ScoreMethod::InfoGain => "info_gain",
            ScoreMethod::Fisher => "fisher",
            ScoreMethod::ChiSquare => "chi_square",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "info_gain" | "ig" | "information_gain" => Some(ScoreMethod::InfoGain),
            "fisher" | "fisher_score" => Some(ScoreMethod::Fisher),
            "chi_square" | "chi2" | "chisquare" => Some(ScoreMethod::ChiSquare),
            _ => None,
        }
    }
}

impl fmt::Display for ScoreMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature_index: usize,
    pub feature_name: String,
    /// Non-negative; `+inf` only for a Fisher score with zero within-class spread.
    pub score: f64,
    pub method: ScoreMethod,
}

/// Cut points for one feature. A value `x` falls in bin `i` when
/// `edges[i-1] <= x < edges[i]`; the last bin is unbounded above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub n_bins: usize,
    pub edges: Vec<f64>,
}

impl BinningSpec {
    pub fn n_effective_bins(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn bin_of(&self, x: f64) -> usize {
        self.edges.partition_point(|&e| e <= x)
    }
}

fn check_labels(labels: &[usize], n_classes: usize) -> Result<(), SelectionError> {
    match labels.iter().find(|&&l| l >= n_classes) {
        Some(&label) => Err(SelectionError::LabelOutOfRange { label, n_classes }),
        None => Ok(()),
    }
}

fn class_counts(labels: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

/// Shannon entropy in bits of a count vector.
pub(crate) fn entropy_of_counts<T: Copy + Into<f64>>(counts: &[T]) -> f64 {
    let total: f64 = counts.iter().map(|&c| c.into()).sum();
    if total <= 0.0 {
        return 0.0;
    }
    -counts
        .iter()
        .map(|&c| c.into())
        .filter(|&c| c > 0.0)
        .map(|c| {
            let p = c / total;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Label entropy in bits.
pub fn entropy(labels: &[usize], n_classes: usize) -> Result<f64, SelectionError> {
    if labels.is_empty() {
        return Err(SelectionError::EmptyInput);
    }
    check_labels(labels, n_classes)?;
    let counts: Vec<u32> = class_counts(labels, n_classes).iter().map(|&c| c as u32).collect();
    Ok(entropy_of_counts(&counts))
}

/// Cut points for equal-frequency bins.
///
/// A feature with at most `n_bins` distinct values gets one bin per value.
/// Otherwise cuts sit at the `i / n_bins` quantiles (linear interpolation
/// between order statistics); a cut landing on the minimum moves up to the
/// next distinct value so heavily tied minima still form their own bin, and
/// duplicate cuts merge.
pub fn equal_frequency_bins(values: &[f64], n_bins: usize) -> Result<BinningSpec, SelectionError> {
    if values.is_empty() {
        return Err(SelectionError::EmptyInput);
    }
    if n_bins < 2 {
        return Err(SelectionError::TooFewBins(n_bins));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= n_bins {
        return Ok(BinningSpec {
            n_bins,
            edges: distinct[1..].to_vec(),
        });
    }
    let last = (sorted.len() - 1) as f64;
    let min = sorted[0];

    let mut edges: Vec<f64> = Vec::with_capacity(n_bins - 1);
    for i in 1..n_bins {
        let pos = last * i as f64 / n_bins as f64;
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        let mut cut = if frac == 0.0 || lo + 1 >= sorted.len() {
            sorted[lo]
        } else {
            sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
        };
        if cut <= min {
            cut = distinct[1];
        }
        if edges.last().is_none_or(|&e| cut > e) {
            edges.push(cut);
        }
    }
    Ok(BinningSpec { n_bins, edges })
}

/// Bins x classes table of counts.
pub fn contingency_table(
    feature: &[f64],
    labels: &[usize],
    n_classes: usize,
    bins: &BinningSpec,
) -> Result<Vec<Vec<u64>>, SelectionError> {
    if feature.len() != labels.len() {
        return Err(SelectionError::LengthMismatch {
            features: feature.len(),
            labels: labels.len(),
        });
    }
    check_labels(labels, n_classes)?;
    let mut table = vec![vec![0u64; n_classes]; bins.n_effective_bins()];
    for (&x, &y) in feature.iter().zip(labels) {
        table[bins.bin_of(x)][y] += 1;
    }
    Ok(table)
}

/// `H(Y) - sum_v (n_v / n) H(Y | bin v)`, clamped to `[0, H(Y)]`.
pub fn information_gain(
    feature: &[f64],
    labels: &[usize],
    n_classes: usize,
    bins: &BinningSpec,
) -> Result<f64, SelectionError> {
    let table = contingency_table(feature, labels, n_classes, bins)?;
    if labels.is_empty() {
        return Err(SelectionError::EmptyInput);
    }
    let n = labels.len() as f64;
    let h_y = entropy(labels, n_classes)?;
    let conditional: f64 = table
        .iter()
        .map(|row| {
            let n_v: u64 = row.iter().sum();
            n_v as f64 / n * entropy_of_counts(&row.iter().map(|&c| c as f64).collect::<Vec<_>>())
        })
        .sum();
    Ok((h_y - conditional).clamp(0.0, h_y))
}

/// Between-class over within-class spread with population variances.
///
/// Returns `+inf` when every class is constant but the class means differ, and
/// `0.0` when the feature is constant.
pub fn fisher_score(feature: &[f64], labels: &[usize], n_classes: usize) -> Result<f64, SelectionError> {
    if feature.len() != labels.len() {
        return Err(SelectionError::LengthMismatch {
            features: feature.len(),
            labels: labels.len(),
        });
    }
    if feature.is_empty() {
        return Err(SelectionError::EmptyInput);
    }
    check_labels(labels, n_classes)?;
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); n_classes];
    for (&x, &y) in feature.iter().zip(labels) {
        members[y].push(x);
    }
    members.retain(|m| !m.is_empty());
    if members.len() < 2 {
        return Err(SelectionError::SingleClass);
    }
    let overall_min = feature.iter().copied().fold(f64::INFINITY, f64::min);
    let overall_max = feature.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if overall_min == overall_max {
        return Ok(0.0);
    }

    let mean = feature.iter().sum::<f64>() / feature.len() as f64;
    let mut between = 0.0;
    let mut within = 0.0;
    for m in &members {
        let n_c = m.len() as f64;
        let (lo, hi) = m
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let mu_c = if lo == hi { lo } else { m.iter().sum::<f64>() / n_c };
        between += n_c * (mu_c - mean).powi(2);
        if lo != hi {
            within += m.iter().map(|x| (x - mu_c).powi(2)).sum::<f64>();
        }
    }
    Ok(if within > 0.0 {
        between / within
    } else if between > 0.0 {
        f64::INFINITY
    } else {
        0.0
    })
}

/// Pearson statistic over a contingency table; cells with zero expectation are skipped.
pub fn chi_square_from_table(table: &[Vec<u64>]) -> f64 {
    let n_cols = table.first().map_or(0, Vec::len);
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_sums: Vec<f64> = (0..n_cols)
        .map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64)
        .collect();
    let n: f64 = row_sums.iter().sum();
    if n == 0.0 {
        return 0.0;
    }
    let mut chi = 0.0;
    for (row, &rs) in table.iter().zip(&row_sums) {
        for (&o, &cs) in row.iter().zip(&col_sums) {
            let e = rs * cs / n;
            if e > 0.0 {
                chi += (o as f64 - e).powi(2) / e;
            }
        }
    }
    chi
}

/// Degrees of freedom of a table, counting only nonempty rows and columns.
pub fn chi_square_dof(table: &[Vec<u64>]) -> usize {
    let n_cols = table.first().map_or(0, Vec::len);
    let rows = table.iter().filter(|r| r.iter().any(|&c| c > 0)).count();
    let cols = (0..n_cols).filter(|&j| table.iter().any(|r| r[j] > 0)).count();
    rows.saturating_sub(1) * cols.saturating_sub(1)
}

pub fn chi_square_stat(
    feature: &[f64],
    labels: &[usize],
    n_classes: usize,
    bins: &BinningSpec,
) -> Result<f64, SelectionError> {
    Ok(chi_square_from_table(&contingency_table(feature, labels, n_classes, bins)?))
}

/// Scores one column with the given method.
pub fn score_feature(
    values: &[f64],
    labels: &[usize],
    n_classes: usize,
    method: ScoreMethod,
    n_bins: usize,
) -> Result<f64, SelectionError> {
    match method {
        ScoreMethod::Fisher => fisher_score(values, labels, n_classes),
        ScoreMethod::InfoGain => {
            information_gain(values, labels, n_classes, &equal_frequency_bins(values, n_bins)?)
        }
        ScoreMethod::ChiSquare => {
            chi_square_stat(values, labels, n_classes, &equal_frequency_bins(values, n_bins)?)
        }
    }
}

/// Scores every feature and sorts best-first; ties keep column order.
pub fn rank_features(
    d: &Dataset,
    method: ScoreMethod,
    n_bins: usize,
) -> Result<Vec<FeatureScore>, SelectionError> {
    if d.has_missing() {
        return Err(SelectionError::MaskedData);
    }
    let scores = (0..d.n_features())
        .into_par_iter()
        .map(|j| score_feature(&d.features().column(j), d.labels(), d.n_classes(), method, n_bins))
        .collect::<Result<Vec<f64>, _>>()?;
    let mut ranking: Vec<FeatureScore> = scores
        .into_iter()
        .enumerate()
        .map(|(j, score)| FeatureScore {
            feature_index: j,
            feature_name: d.feature_names()[j].clone(),
            score,
            method,
        })
        .collect();
    ranking.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.feature_index.cmp(&b.feature_index))
    });
    Ok(ranking)
}

/// Feature indices of the first `k` ranking entries.
pub fn select_top_k(ranking: &[FeatureScore], k: usize) -> Result<Vec<usize>, SelectionError> {
    if k == 0 || k > ranking.len() {
        return Err(SelectionError::OutOfRange {
            k,
            n_features: ranking.len(),
        });
    }
    Ok(ranking[..k].iter().map(|s| s.feature_index).collect())
}

/// Writes `rank,feature_name,method,score`; infinite scores are written as `inf`.
pub fn write_ranking_csv<W: Write>(ranking: &[FeatureScore], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "feature_name", "method", "score"])?;
    for (i, s) in ranking.iter().enumerate() {
        let score = if s.score.is_infinite() {
            "inf".to_string()
        } else {
            s.score.to_string()
        };
        w.write_record([(i + 1).to_string(), s.feature_name.clone(), s.method.to_string(), score])?;
    }
    w.flush()
}
