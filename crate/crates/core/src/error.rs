use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate treatment arms: {0}")]
    DegenerateArm(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("training diverged at iteration {iteration}: non-finite loss")]
    TrainingDiverged { iteration: usize },

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("singular design for arm {arm}")]
    SingularDesign { arm: u8 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("metric unavailable: {0}")]
    MetricUnavailable(String),

    #[error("empty stratum: {0}")]
    StratumEmpty(String),

    #[error("too few rows to split: {n} (need at least 10)")]
    TooFewRows { n: usize },

    #[error("all grid points failed: {}", .0.join("; "))]
    AllFailed(Vec<String>),

    #[error("experiment failed: {failed} of {total} runs failed")]
    ExperimentFailed { failed: usize, total: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Stable machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DegenerateArm(_) => "degenerate_arm",
            Error::DegenerateLabels(_) => "degenerate_labels",
            Error::TrainingDiverged { .. } => "training_diverged",
            Error::EmptyData(_) => "empty_data",
            Error::SingularDesign { .. } => "singular_design",
            Error::Parse { .. } => "parse",
            Error::MetricUnavailable(_) => "metric_unavailable",
            Error::StratumEmpty(_) => "stratum_empty",
            Error::TooFewRows { .. } => "too_few_rows",
            Error::AllFailed(_) => "all_failed",
            Error::ExperimentFailed { .. } => "experiment_failed",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
