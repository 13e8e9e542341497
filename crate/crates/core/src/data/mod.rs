//! Flow-table ingestion: CSV loading, typing, imputation, scaling and
//! reproducible train/test partitions.

mod dataset;
mod impute;
mod normalize;
mod split;
mod table;
mod taxonomy;

pub use dataset::{
    encode_labels, is_numeric_column, to_dataset, to_dataset_with, Dataset, MissingTokens,
    DEFAULT_MISSING_TOKENS,
};
pub use impute::{apply_imputer, fit_imputer, impute_missing, ImputeStrategy, ImputerParams};
pub use normalize::{apply_normalizer, fit_normalizer, NormalizationMethod, NormalizationParams};
pub use split::{kfold, stratified_split, SplitPlan};
pub use table::{load_flow_csv, load_flow_csv_with, parse_flow_csv, RawTable};
pub use taxonomy::{ClassTaxonomy, Stage};


#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("data row {row}: label {value:?} is not in the taxonomy")]
    UnknownLabel { row: usize, value: String },
    #[error("data row {row}, column {column:?}: non-numeric value {value:?}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("dataset still contains missing cells")]
    MaskedData,
    #[error("class {class:?} has {count} samples, need at least {required}")]
    TooFewSamples {
        class: String,
        count: usize,
        required: usize,
    },
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
