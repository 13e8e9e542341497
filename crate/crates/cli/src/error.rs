use std::fmt;
use std::path::Path;

use dtc_core::data::DataError;
use dtc_core::eval::EvalError;
use dtc_core::features::SelectionError;
use dtc_core::learners::LearnError;
use dtc_core::persist::PersistError;
use dtc_core::pipeline::PipelineError;

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed input data or model files (exit 2).
    Input(String),
    /// Bad flags, config or schema (exit 3).
    Config(String),
    /// A learner failed numerically during training (exit 4).
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Config(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Input(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            CliError::Input(m) => ("input error", m),
            CliError::Config(m) => ("config error", m),
            CliError::Numerical(m) => ("numerical failure", m),
        };
        write!(f, "{kind}: {msg}")
    }
}

impl std::error::Error for CliError {}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidTaxonomy(_) | DataError::InvalidParameter(_) => CliError::Config(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<SelectionError> for CliError {
    fn from(e: SelectionError) -> Self {
        match e {
            SelectionError::OutOfRange { .. } | SelectionError::TooFewBins(_) => CliError::Config(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::ShapeMismatch { .. } | LearnError::MaskedData | LearnError::EmptyDataset => {
                CliError::Input(e.to_string())
            }
            LearnError::InvalidParameter(_) | LearnError::KTooLarge { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<PersistError> for CliError {
    fn from(e: PersistError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Data(e) => e.into(),
            PipelineError::Selection(e) => e.into(),
            PipelineError::Learn(e) => e.into(),
            PipelineError::Persist(e) => e.into(),
            PipelineError::SpecMismatch { .. } | PipelineError::StageLayout | PipelineError::InvalidGate(_) => {
                CliError::Config(e.to_string())
            }
            PipelineError::ColumnMismatch { .. } | PipelineError::ShapeMismatch { .. } => {
                CliError::Input(e.to_string())
            }
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Pipeline(e) => e.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
