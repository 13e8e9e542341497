use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMethod {
    #[default]
    MinMax,
    ZScore,
}

/// Fitted per-feature scaling. Pairs are `(min, max)` for min-max and
/// `(mean, population stddev)` for z-score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub method: NormalizationMethod,
    pub per_feature: Vec<(f64, f64)>,
}

impl NormalizationParams {
    fn scale(&self, j: usize, x: f64) -> f64 {
        let (a, b) = self.per_feature[j];
        match self.method {
            NormalizationMethod::MinMax if b > a => (x - a) / (b - a),
            NormalizationMethod::ZScore if b > 0.0 => (x - a) / b,
            _ => 0.0,
        }
    }

    /// Scales a raw matrix. Values outside the fitted range are not clipped.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix, DataError> {
        if x.n_cols() != self.per_feature.len() {
            return Err(DataError::ShapeMismatch {
                expected: self.per_feature.len(),
                actual: x.n_cols(),
            });
        }
        Ok(x.map_columns(|j, v| self.scale(j, v)))
    }
}

pub fn fit_normalizer(
    d: &Dataset,
    method: NormalizationMethod,
) -> Result<NormalizationParams, DataError> {
    if d.has_missing() {
        return Err(DataError::MaskedData);
    }
    let x = d.features();
    let n = x.n_rows() as f64;
    let per_feature = (0..x.n_cols())
        .map(|j| {
            let col = x.column(j);
            match method {
                NormalizationMethod::MinMax => {
                    let min = col.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    (min, max)
                }
                NormalizationMethod::ZScore => {
                    let mean = col.iter().sum::<f64>() / n;
                    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    (mean, var.sqrt())
                }
            }
        })
        .collect();
    Ok(NormalizationParams {
        method,
        per_feature,
    })
}

pub fn apply_normalizer(d: &Dataset, p: &NormalizationParams) -> Result<Dataset, DataError> {
    if d.has_missing() {
        return Err(DataError::MaskedData);
    }
    Ok(d.with_features(p.transform(d.features())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ClassTaxonomy;

    fn col(values: &[f64]) -> Dataset {
        Dataset::new(
            Matrix::from_vec(values.len(), 1, values.to_vec()),
            vec!["a".into()],
            vec![0; values.len()],
            ClassTaxonomy::stage_one(),
        )
        .unwrap()
    }

    fn normalized(values: &[f64], method: NormalizationMethod) -> Vec<f64> {
        let d = col(values);
        let p = fit_normalizer(&d, method).unwrap();
        apply_normalizer(&d, &p).unwrap().features().column(0)
    }

    #[test]
    fn min_max_endpoints_and_midpoint() {
        assert_eq!(normalized(&[0.0, 5.0, 10.0], NormalizationMethod::MinMax), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        for m in [NormalizationMethod::MinMax, NormalizationMethod::ZScore] {
            assert_eq!(normalized(&[7.0, 7.0, 7.0], m), vec![0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn z_score_uses_population_stddev() {
        // mean 3, population stddev 1
        assert_eq!(normalized(&[2.0, 4.0], NormalizationMethod::ZScore), vec![-1.0, 1.0]);
    }

    #[test]
    fn test_rows_are_not_clipped() {
        let p = fit_normalizer(&col(&[0.0, 10.0]), NormalizationMethod::MinMax).unwrap();
        let out = p.transform(&Matrix::from_vec(2, 1, vec![-10.0, 20.0])).unwrap();
        assert_eq!(out.column(0), vec![-1.0, 2.0]);
    }

    #[test]
    fn masked_input_is_rejected() {
        let d = Dataset::with_mask(
            Matrix::from_vec(2, 1, vec![0.0, 1.0]),
            vec![true, false],
            vec!["a".into()],
            vec![0, 0],
            ClassTaxonomy::stage_one(),
        )
        .unwrap();
        assert!(matches!(
            fit_normalizer(&d, NormalizationMethod::MinMax),
            Err(DataError::MaskedData)
        ));
    }

    #[test]
    fn width_mismatch() {
        let p = fit_normalizer(&col(&[0.0, 1.0]), NormalizationMethod::MinMax).unwrap();
        assert!(p.transform(&Matrix::zeros(1, 3)).is_err());
    }
}
