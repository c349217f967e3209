use thiserror::Error;

/// Broad failure category, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Model,
    Evaluation,
}

#[derive(Debug, Error)]
pub enum Error {
    // schema / dataset
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("duplicate hint {hint} on columns {first} and {second}")]
    DuplicateHint { hint: String, first: String, second: String },
    #[error("duplicate key {key} in {table} feature table")]
    DuplicateFeatureKey { table: String, key: String },
    #[error("non-finite rating at row {row}")]
    NonFiniteRating { row: usize },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("unknown column: {0}")]
    UnknownColumn(String),
    #[error("column {0} is not categorical")]
    NonCategoricalColumn(String),
    #[error("unseen token {token} in column {column}")]
    UnseenToken { column: String, token: String },
    #[error("index {index} out of range for column {column} of size {size}")]
    IndexOutOfRange { column: String, index: usize, size: usize },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    // preprocessing / splitting
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
    #[error("invalid period: start {start} must be before end {end}")]
    InvalidPeriod { start: i64, end: i64 },
    #[error("invalid ratio {0}: must lie in (0, 1)")]
    InvalidRatio(f64),

    // models
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("model is not fitted")]
    UnfittedModel,
    #[error("ratings must be binary 0/1, found {0}")]
    NonBinaryRatings(f64),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("unknown metric: {0}")]
    UnknownMetric(String),
    #[error("unknown model: {0}")]
    UnknownModel(String),
    #[error("model file: {0}")]
    ModelFormat(String),

    // evaluation
    #[error("missing input for {metric}: {input}")]
    MissingInput { metric: String, input: String },
    #[error("no users to evaluate")]
    EmptyEvaluation,

    // tuning
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("search space dimension {0} is not finite")]
    NonFiniteSpace(String),
    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// Stable machine-readable code: the variant name.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MissingColumn(_) => "MissingColumn",
            Error::DuplicateHint { .. } => "DuplicateHint",
            Error::DuplicateFeatureKey { .. } => "DuplicateFeatureKey",
            Error::NonFiniteRating { .. } => "NonFiniteRating",
            Error::InvalidSchema(_) => "InvalidSchema",
            Error::UnknownColumn(_) => "UnknownColumn",
            Error::NonCategoricalColumn(_) => "NonCategoricalColumn",
            Error::UnseenToken { .. } => "UnseenToken",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::Parse { .. } => "ParseError",
            Error::Io { .. } => "IoError",
            Error::InvalidThreshold(_) => "InvalidThreshold",
            Error::InvalidPeriod { .. } => "InvalidPeriod",
            Error::InvalidRatio(_) => "InvalidRatio",
            Error::EmptyDataset => "EmptyDataset",
            Error::UnfittedModel => "UnfittedModel",
            Error::NonBinaryRatings(_) => "NonBinaryRatings",
            Error::InvalidParameter { .. } => "InvalidParameter",
            Error::UnknownMetric(_) => "UnknownMetric",
            Error::UnknownModel(_) => "UnknownModel",
            Error::ModelFormat(_) => "ModelFormat",
            Error::MissingInput { .. } => "MissingInput",
            Error::EmptyEvaluation => "EmptyEvaluation",
            Error::InvalidSpace(_) => "InvalidSpace",
            Error::NonFiniteSpace(_) => "NonFiniteSpace",
            Error::AllTrialsFailed(_) => "AllTrialsFailed",
            Error::Config(_) => "ConfigError",
        }
    }

    pub fn category(&self) -> ErrorCategory {
        use ErrorCategory::*;
        match self {
            Error::InvalidThreshold(_)
            | Error::InvalidPeriod { .. }
            | Error::InvalidRatio(_)
            | Error::InvalidSchema(_)
            | Error::DuplicateHint { .. }
            | Error::UnknownColumn(_)
            | Error::NonCategoricalColumn(_)
            | Error::UnknownModel(_)
            | Error::UnknownMetric(_)
            | Error::InvalidParameter { .. }
            | Error::InvalidSpace(_)
            | Error::NonFiniteSpace(_)
            | Error::Config(_) => Config,
            Error::MissingColumn(_)
            | Error::DuplicateFeatureKey { .. }
            | Error::NonFiniteRating { .. }
            | Error::UnseenToken { .. }
            | Error::IndexOutOfRange { .. }
            | Error::Parse { .. }
            | Error::Io { .. } => Data,
            Error::EmptyDataset
            | Error::UnfittedModel
            | Error::NonBinaryRatings(_)
            | Error::ModelFormat(_)
            | Error::AllTrialsFailed(_) => Model,
            Error::MissingInput { .. } | Error::EmptyEvaluation => Evaluation,
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name: name.to_string(), reason: reason.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
