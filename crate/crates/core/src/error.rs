use thiserror::Error;

/// Errors raised by every stage of the toolkit.
#[derive(Debug, Error)]
pub enum MteError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error in column `{column}`: {message}")]
    Domain { column: String, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("rank-deficient design in {block}: collinear columns {columns:?}")]
    RankDeficient { block: String, columns: Vec<String> },

    #[error("probit diverged (coefficient norm {norm:.3e}); likely perfect separation")]
    Separation { norm: f64 },

    #[error("no convergence after {iterations} iterations (gradient max-norm {gradient:.3e})")]
    NotConverged { iterations: usize, gradient: f64 },

    #[error("value {value} outside support [{lo}, {hi}]")]
    OutOfSupport { value: f64, lo: f64, hi: f64 },

    #[error("degenerate outcome: {0}")]
    DegenerateOutcome(String),

    #[error("bootstrap aborted: {failed} of {total} replicates failed (first reason: {first_reason})")]
    BootstrapFailed {
        failed: usize,
        total: usize,
        first_reason: String,
    },

    #[error("stage `{stage}` failed on {rows} rows: {source}")]
    Stage {
        stage: String,
        rows: usize,
        #[source]
        source: Box<MteError>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl MteError {
    /// Wraps an error with the pipeline stage and row count it occurred at.
    pub fn in_stage(self, stage: &str, rows: usize) -> MteError {
        MteError::Stage {
            stage: stage.to_string(),
            rows,
            source: Box::new(self),
        }
    }

    /// Short machine-readable kind tag.
    pub fn kind(&self) -> &'static str {
        match self {
            MteError::InvalidInput(_) => "invalid_input",
            MteError::Config(_) => "config",
            MteError::Domain { .. } => "domain",
            MteError::Schema(_) => "schema",
            MteError::Parse { .. } => "parse",
            MteError::RankDeficient { .. } => "rank_deficient",
            MteError::Separation { .. } => "separation",
            MteError::NotConverged { .. } => "not_converged",
            MteError::OutOfSupport { .. } => "out_of_support",
            MteError::DegenerateOutcome(_) => "degenerate_outcome",
            MteError::BootstrapFailed { .. } => "bootstrap_failed",
            MteError::Stage { source, .. } => source.kind(),
            MteError::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, MteError>;
