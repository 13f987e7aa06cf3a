use thiserror::Error;

/// Unified error type for the whole crate.
///
/// Variants are grouped by how the CLI reports them: configuration and usage
/// problems, data-format problems, and numerical failures. [`Error::exit_code`]
/// encodes that grouping.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or argument value.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An index or label referenced something out of range.
    #[error("index out of range: {0}")]
    Index(String),

    /// Dimensions of two values that must agree do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A value violated a numeric-domain requirement (non-finite input,
    /// value outside the permitted range, …).
    #[error("domain error: {0}")]
    Domain(String),

    /// A file had the wrong structure (bad header, ragged rows, duplicate
    /// identifiers, inconsistent serialized shapes, …).
    #[error("data format error: {0}")]
    Format(String),

    /// A cell failed to parse; positions are 1-based file coordinates.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    /// Training produced a non-finite loss.
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    /// Not enough samples to carry out the requested operation.
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    /// A variance required to be positive was zero.
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    /// LRP z-rule hit a zero pre-activation with non-zero relevance.
    #[error("division hazard: {0}; use the epsilon rule for this input")]
    DivisionHazard(String),

    /// Genes requested by name are absent from the data.
    #[error("missing genes: {}", genes.join(", "))]
    MissingGenes { genes: Vec<String> },

    /// A pipeline stage filtered everything away.
    #[error("empty result: {0}")]
    EmptyResult(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code class: 1 usage/configuration, 2 data format,
    /// 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Index(_) | Error::Io(_) | Error::Json(_) => 1,
            Error::Format(_)
            | Error::Parse { .. }
            | Error::Csv(_)
            | Error::MissingGenes { .. }
            | Error::Shape(_) => 2,
            Error::Domain(_)
            | Error::TrainingDiverged { .. }
            | Error::InsufficientSamples(_)
            | Error::DegenerateVariance(_)
            | Error::DivisionHazard(_)
            | Error::EmptyResult(_) => 3,
        }
    }

    /// Stable machine-readable kind for error JSON emitted by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Index(_) => "index",
            Error::Shape(_) => "shape",
            Error::Domain(_) => "domain",
            Error::Format(_) => "data_format",
            Error::Parse { .. } => "parse",
            Error::TrainingDiverged { .. } => "training_diverged",
            Error::InsufficientSamples(_) => "insufficient_samples",
            Error::DegenerateVariance(_) => "degenerate_variance",
            Error::DivisionHazard(_) => "division_hazard",
            Error::MissingGenes { .. } => "missing_genes",
            Error::EmptyResult(_) => "empty_result",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
