use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeStrategy {
    #[default]
    MedianPerFeature,
    DropRow,
}

/// Per-column fill values fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputerParams {
    pub medians: Vec<f64>,
}

/// Median of the unmasked cells of each column; 0.0 for fully masked columns.
pub fn fit_imputer(d: &Dataset) -> ImputerParams {
    let medians = (0..d.n_features())
        .map(|j| {
            let mut present: Vec<f64> = (0..d.n_samples())
                .filter(|&i| !d.is_missing(i, j))
                .map(|i| d.features().get(i, j))
                .collect();
            median(&mut present).unwrap_or(0.0)
        })
        .collect();
    ImputerParams { medians }
}

/// Fills masked cells with the fitted medians and clears the mask.
pub fn apply_imputer(d: &Dataset, params: &ImputerParams) -> Result<Dataset, DataError> {
    if params.medians.len() != d.n_features() {
        return Err(DataError::ShapeMismatch {
            expected: params.medians.len(),
            actual: d.n_features(),
        });
    }
    let (mut features, mask, names, labels, taxonomy) = d.clone().into_parts();
    let m = names.len();
    for (idx, _) in mask.iter().enumerate().filter(|(_, &masked)| masked) {
        features.set(idx / m, idx % m, params.medians[idx % m]);
    }
    Dataset::new(features, names, labels, taxonomy)
}

pub fn impute_missing(d: &Dataset, strategy: ImputeStrategy) -> Result<Dataset, DataError> {
    if !d.has_missing() {
        return Ok(d.clone());
    }
    match strategy {
        ImputeStrategy::MedianPerFeature => apply_imputer(d, &fit_imputer(d)),
        ImputeStrategy::DropRow => {
            let keep: Vec<usize> = (0..d.n_samples())
                .filter(|&i| (0..d.n_features()).all(|j| !d.is_missing(i, j)))
                .collect();
            if keep.is_empty() {
                return Err(DataError::EmptyDataset);
            }
            Ok(d.subset_rows(&keep))
        }
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ClassTaxonomy;
    use crate::matrix::Matrix;

    fn masked(values: &[f64], mask: &[bool]) -> Dataset {
        Dataset::with_mask(
            Matrix::from_vec(values.len(), 1, values.to_vec()),
            mask.to_vec(),
            vec!["a".into()],
            vec![0; values.len()],
            ClassTaxonomy::stage_one(),
        )
        .unwrap()
    }

    #[test]
    fn median_fills_gap() {
        // median of {1, 3} is 2
        let d = masked(&[1.0, 0.0, 3.0], &[false, true, false]);
        let out = impute_missing(&d, ImputeStrategy::MedianPerFeature).unwrap();
        assert_eq!(out.features().column(0), vec![1.0, 2.0, 3.0]);
        assert!(!out.has_missing());
    }

    #[test]
    fn fully_masked_column_becomes_zero() {
        let d = masked(&[5.0, 6.0], &[true, true]);
        let out = impute_missing(&d, ImputeStrategy::MedianPerFeature).unwrap();
        assert_eq!(out.features().column(0), vec![0.0, 0.0]);
    }

    #[test]
    fn no_missing_is_identity() {
        let d = masked(&[1.0, 2.0], &[false, false]);
        assert_eq!(impute_missing(&d, ImputeStrategy::DropRow).unwrap(), d);
        assert_eq!(impute_missing(&d, ImputeStrategy::MedianPerFeature).unwrap(), d);
    }

    #[test]
    fn drop_rows() {
        let d = masked(&[1.0, 0.0, 3.0], &[false, true, false]);
        let out = impute_missing(&d, ImputeStrategy::DropRow).unwrap();
        assert_eq!(out.features().column(0), vec![1.0, 3.0]);
        let all = masked(&[1.0, 2.0], &[true, true]);
        assert!(matches!(
            impute_missing(&all, ImputeStrategy::DropRow),
            Err(DataError::EmptyDataset)
        ));
    }

    #[test]
    fn odd_and_even_medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }
}
