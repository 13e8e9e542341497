use std::collections::{BTreeMap, HashMap};

use super::{ClassTaxonomy, DataError, RawTable};
use crate::matrix::Matrix;

/// Cell tokens CICFlowMeter-style exports use for undefined statistics.
pub const DEFAULT_MISSING_TOKENS: [&str; 5] = ["NaN", "Infinity", "-Infinity", "inf", ""];

/// Set of strings treated as missing values. Matching ignores case and surrounding whitespace.
#[derive(Debug, Clone)]
pub struct MissingTokens(Vec<String>);

impl MissingTokens {
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        Self(tokens.into_iter().map(|t| t.into().trim().to_string()).collect())
    }

    pub fn contains(&self, cell: &str) -> bool {
        let cell = cell.trim();
        self.0.iter().any(|t| t.eq_ignore_ascii_case(cell))
    }
}

impl Default for MissingTokens {
    fn default() -> Self {
        Self::new(DEFAULT_MISSING_TOKENS)
    }
}

/// Numeric feature matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    missing_mask: Vec<bool>,
    feature_names: Vec<String>,
    labels: Vec<usize>,
    taxonomy: ClassTaxonomy,
}

impl Dataset {
    /// Builds a dataset with no missing cells.
    pub fn new(
        features: Matrix,
        feature_names: Vec<String>,
        labels: Vec<usize>,
        taxonomy: ClassTaxonomy,
    ) -> Result<Self, DataError> {
        let mask = vec![false; features.n_rows() * features.n_cols()];
        Self::with_mask(features, mask, feature_names, labels, taxonomy)
    }

    pub fn with_mask(
        features: Matrix,
        missing_mask: Vec<bool>,
        feature_names: Vec<String>,
        labels: Vec<usize>,
        taxonomy: ClassTaxonomy,
    ) -> Result<Self, DataError> {
        let (n, m) = (features.n_rows(), features.n_cols());
        if n == 0 {
            return Err(DataError::EmptyDataset);
        }
        if labels.len() != n || missing_mask.len() != n * m || feature_names.len() != m {
            return Err(DataError::ShapeMismatch {
                expected: n,
                actual: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= taxonomy.len()) {
            return Err(DataError::UnknownLabel {
                row: labels.iter().position(|&l| l == bad).unwrap() + 1,
                value: bad.to_string(),
            });
        }
        for (idx, &v) in features.as_slice().iter().enumerate() {
            if !missing_mask[idx] && !v.is_finite() {
                return Err(DataError::NonNumericCell {
                    row: idx / m + 1,
                    column: feature_names[idx % m].clone(),
                    value: v.to_string(),
                });
            }
        }
        Ok(Self {
            features,
            missing_mask,
            feature_names,
            labels,
            taxonomy,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn taxonomy(&self) -> &ClassTaxonomy {
        &self.taxonomy
    }

    pub fn n_samples(&self) -> usize {
        self.features.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    pub fn n_classes(&self) -> usize {
        self.taxonomy.len()
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.missing_mask[row * self.n_features() + col]
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing_mask
    }

    pub fn has_missing(&self) -> bool {
        self.missing_mask.iter().any(|&m| m)
    }

    /// Number of masked cells per column.
    pub fn missing_per_column(&self) -> Vec<usize> {
        let m = self.n_features();
        let mut counts = vec![0; m];
        for (idx, &masked) in self.missing_mask.iter().enumerate() {
            if masked {
                counts[idx % m] += 1;
            }
        }
        counts
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Label names per row, decoded through the taxonomy.
    pub fn label_names(&self) -> Vec<&str> {
        self.labels
            .iter()
            .map(|&l| self.taxonomy.name(l).unwrap())
            .collect()
    }

    /// Rows in the given order. Panics on an empty index list.
    pub fn subset_rows(&self, indices: &[usize]) -> Dataset {
        assert!(!indices.is_empty(), "row subset must be nonempty");
        let m = self.n_features();
        let mut mask = Vec::with_capacity(indices.len() * m);
        for &i in indices {
            mask.extend_from_slice(&self.missing_mask[i * m..(i + 1) * m]);
        }
        Dataset {
            features: self.features.select_rows(indices),
            missing_mask: mask,
            feature_names: self.feature_names.clone(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            taxonomy: self.taxonomy.clone(),
        }
    }

    /// Columns in the given order.
    pub fn select_features(&self, indices: &[usize]) -> Dataset {
        let m = self.n_features();
        let mut mask = Vec::with_capacity(self.n_samples() * indices.len());
        for i in 0..self.n_samples() {
            mask.extend(indices.iter().map(|&j| self.missing_mask[i * m + j]));
        }
        Dataset {
            features: self.features.select_cols(indices),
            missing_mask: mask,
            feature_names: indices.iter().map(|&j| self.feature_names[j].clone()).collect(),
            labels: self.labels.clone(),
            taxonomy: self.taxonomy.clone(),
        }
    }

    /// Same labels and mask, replaced feature values.
    pub(crate) fn with_features(&self, features: Matrix) -> Dataset {
        debug_assert_eq!(features.n_rows(), self.n_samples());
        debug_assert_eq!(features.n_cols(), self.n_features());
        Dataset {
            features,
            ..self.clone()
        }
    }

    pub(crate) fn into_parts(self) -> (Matrix, Vec<bool>, Vec<String>, Vec<usize>, ClassTaxonomy) {
        (
            self.features,
            self.missing_mask,
            self.feature_names,
            self.labels,
            self.taxonomy,
        )
    }
}

/// Types a raw table into a dataset using the default missing tokens.
pub fn to_dataset(
    table: &RawTable,
    feature_columns: &[String],
    label_column: &str,
    taxonomy: &ClassTaxonomy,
    label_aliases: &HashMap<String, String>,
) -> Result<Dataset, DataError> {
    to_dataset_with(
        table,
        feature_columns,
        label_column,
        taxonomy,
        label_aliases,
        &MissingTokens::default(),
    )
}

pub fn to_dataset_with(
    table: &RawTable,
    feature_columns: &[String],
    label_column: &str,
    taxonomy: &ClassTaxonomy,
    label_aliases: &HashMap<String, String>,
    missing: &MissingTokens,
) -> Result<Dataset, DataError> {
    let feature_idx = feature_columns
        .iter()
        .map(|c| {
            table
                .column_index(c)
                .ok_or_else(|| DataError::UnknownColumn(c.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let label_idx = table
        .column_index(label_column)
        .ok_or_else(|| DataError::UnknownColumn(label_column.to_string()))?;
    if table.rows.is_empty() {
        return Err(DataError::EmptyDataset);
    }

    let labels = encode_labels(table.column(label_idx), taxonomy, label_aliases)?;

    let m = feature_idx.len();
    let mut values = Vec::with_capacity(table.n_rows() * m);
    let mut mask = Vec::with_capacity(table.n_rows() * m);
    for (r, row) in table.rows.iter().enumerate() {
        for (&c, name) in feature_idx.iter().zip(feature_columns) {
            match parse_cell(&row[c], missing) {
                Cell::Value(v) => {
                    values.push(v);
                    mask.push(false);
                }
                Cell::Missing => {
                    values.push(0.0);
                    mask.push(true);
                }
                Cell::Invalid => {
                    return Err(DataError::NonNumericCell {
                        row: r + 1,
                        column: name.clone(),
                        value: row[c].clone(),
                    })
                }
            }
        }
    }
    Dataset::with_mask(
        Matrix::from_vec(table.n_rows(), m, values),
        mask,
        feature_columns.iter().map(|c| c.trim().to_string()).collect(),
        labels,
        taxonomy.clone(),
    )
}

/// Maps label cells to class indices through an alias table. Both the alias
/// keys and the taxonomy names match case-insensitively.
pub fn encode_labels<'a>(
    cells: impl Iterator<Item = &'a str>,
    taxonomy: &ClassTaxonomy,
    label_aliases: &HashMap<String, String>,
) -> Result<Vec<usize>, DataError> {
    let aliases: BTreeMap<String, &str> = label_aliases
        .iter()
        .map(|(k, v)| (k.trim().to_lowercase(), v.as_str()))
        .collect();
    cells
        .enumerate()
        .map(|(r, cell)| {
            let key = cell.trim();
            let resolved = aliases.get(&key.to_lowercase()).copied().unwrap_or(key);
            taxonomy
                .index_of(resolved)
                .ok_or_else(|| DataError::UnknownLabel {
                    row: r + 1,
                    value: cell.to_string(),
                })
        })
        .collect()
}

enum Cell {
    Value(f64),
    Missing,
    Invalid,
}

fn parse_cell(cell: &str, missing: &MissingTokens) -> Cell {
    if missing.contains(cell) {
        return Cell::Missing;
    }
    match cell.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Cell::Value(v),
        // Overflowing literals and spellings like "nan" that are not listed tokens.
        Ok(_) => Cell::Missing,
        Err(_) => Cell::Invalid,
    }
}

/// Whether every cell of a column is numeric or a missing token.
pub fn is_numeric_column(table: &RawTable, index: usize, missing: &MissingTokens) -> bool {
    table
        .column(index)
        .all(|c| !matches!(parse_cell(c, missing), Cell::Invalid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_flow_csv;

    fn table(s: &str) -> RawTable {
        parse_flow_csv(s.as_bytes(), b',', "t").unwrap()
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn infinity_token_masks_cell() {
        let t = table("a,b,Label\n1,Infinity,tor\n2,3,vpn\n");
        let d = to_dataset(
            &t,
            &names(&["a", "b"]),
            "Label",
            &ClassTaxonomy::stage_two(),
            &HashMap::new(),
        )
        .unwrap();
        assert!(d.is_missing(0, 1));
        assert_eq!(d.features().get(0, 1), 0.0);
        assert!(!d.is_missing(1, 1));
        assert_eq!(d.labels(), &[0, 2]);
    }

    #[test]
    fn every_default_token_is_missing() {
        let t = table("a,Label\nNaN,tor\nInfinity,tor\n-Infinity,tor\ninf,tor\n,tor\n1e999,tor\n");
        let d = to_dataset(
            &t,
            &names(&["a"]),
            "Label",
            &ClassTaxonomy::stage_two(),
            &HashMap::new(),
        )
        .unwrap();
        assert!(d.missing_mask().iter().all(|&m| m));
    }

    #[test]
    fn label_case_folding_and_aliases() {
        let t = table("a,Label\n1,non-tor\n2,NonVPN\n3,TOR\n");
        let mut aliases = HashMap::new();
        aliases.insert("nonvpn".to_string(), "Non-VPN".to_string());
        let d = to_dataset(&t, &names(&["a"]), "Label", &ClassTaxonomy::stage_two(), &aliases)
            .unwrap();
        assert_eq!(d.labels(), &[1, 3, 0]);
        assert_eq!(d.label_names(), vec!["Non-Tor", "Non-VPN", "Tor"]);
    }

    #[test]
    fn unknown_label_reports_row() {
        let t = table("a,Label\n1,tor\n2,torrent\n");
        let err = to_dataset(
            &t,
            &names(&["a"]),
            "Label",
            &ClassTaxonomy::stage_two(),
            &HashMap::new(),
        )
        .unwrap_err();
        match err {
            DataError::UnknownLabel { row, value } => {
                assert_eq!(row, 2);
                assert_eq!(value, "torrent");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_column_and_non_numeric() {
        let t = table("a,Label\nx,tor\n");
        let tax = ClassTaxonomy::stage_two();
        assert!(matches!(
            to_dataset(&t, &names(&["zz"]), "Label", &tax, &HashMap::new()),
            Err(DataError::UnknownColumn(c)) if c == "zz"
        ));
        assert!(matches!(
            to_dataset(&t, &names(&["a"]), "Label", &tax, &HashMap::new()),
            Err(DataError::NonNumericCell { row: 1, .. })
        ));
        assert!(!is_numeric_column(&t, 0, &MissingTokens::default()));
    }

    #[test]
    fn overridden_tokens() {
        let t = table("a,Label\n?,tor\n");
        let d = to_dataset_with(
            &t,
            &names(&["a"]),
            "Label",
            &ClassTaxonomy::stage_two(),
            &HashMap::new(),
            &MissingTokens::new(["?"]),
        )
        .unwrap();
        assert!(d.is_missing(0, 0));
    }
}
