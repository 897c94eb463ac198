use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: outcome {y} is not strictly positive (enable outcome shifting to accept it)")]
    NonPositiveOutcome { row: usize, y: f64 },

    #[error("no units in cell s={s}, t={t}")]
    EmptyCell { s: u8, t: u8 },

    #[error("row {row}: expected {expected} columns, found {found}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}: column `{column}` must be 0 or 1, found {value}")]
    InvalidIndicator {
        row: usize,
        column: String,
        value: f64,
    },

    #[error("row {row}: column `{column}` is not finite")]
    NonFinite { row: usize, column: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("normal equations are singular ({0})")]
    SingularSystem(String),

    #[error("training split of fold {fold} has no units with s={s}, t={t}")]
    EmptyTrainingCell { fold: usize, s: u8, t: u8 },

    #[error("subgroup selects no units")]
    EmptySubgroup,

    #[error("simulation failed to produce a valid dataset after {attempts} attempts")]
    DegenerateDraw { attempts: usize },

    #[error("simulation internals (U, C) are not available")]
    InternalsUnavailable,

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("resample count {r} is below the minimum of 100")]
    RTooSmall { r: usize },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("cannot parse subgroup filter: {0}")]
    FilterSyntax(String),

    #[error("row {row}: column `{column}` has unparseable value `{value}`")]
    ParseValue {
        row: usize,
        column: String,
        value: String,
    },

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonPositiveOutcome { .. } => "NonPositiveOutcome",
            Error::EmptyCell { .. } => "EmptyCell",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidIndicator { .. } => "InvalidIndicator",
            Error::NonFinite { .. } => "NonFinite",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::SingularSystem(_) => "SingularSystem",
            Error::EmptyTrainingCell { .. } => "EmptyTrainingCell",
            Error::EmptySubgroup => "EmptySubgroup",
            Error::DegenerateDraw { .. } => "DegenerateDraw",
            Error::InternalsUnavailable => "InternalsUnavailable",
            Error::UnknownScenario(_) => "UnknownScenario",
            Error::RTooSmall { .. } => "RTooSmall",
            Error::UnknownColumn(_) => "UnknownColumn",
            Error::FilterSyntax(_) => "FilterSyntax",
            Error::ParseValue { .. } => "ParseValue",
            Error::FileNotFound(_) => "FileNotFound",
            Error::Csv(_) => "CsvError",
            Error::Json(_) => "JsonError",
            Error::Io(_) => "IoError",
        }
    }

    /// Process exit code used by the command-line tool.
    ///
    /// 2: bad invocation or missing input, 3: input data rejected,
    /// 4: estimation failed, 5: I/O failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_)
            | Error::UnknownScenario(_)
            | Error::RTooSmall { .. }
            | Error::UnknownColumn(_)
            | Error::FilterSyntax(_)
            | Error::FileNotFound(_)
            | Error::Json(_) => 2,
            Error::NonPositiveOutcome { .. }
            | Error::EmptyCell { .. }
            | Error::DimensionMismatch { .. }
            | Error::InvalidIndicator { .. }
            | Error::NonFinite { .. }
            | Error::ParseValue { .. }
            | Error::Csv(_) => 3,
            Error::SingularSystem(_)
            | Error::EmptyTrainingCell { .. }
            | Error::EmptySubgroup
            | Error::DegenerateDraw { .. }
            | Error::InternalsUnavailable => 4,
            Error::Io(_) => 5,
        }
    }
}
