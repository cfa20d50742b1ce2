use thiserror::Error;

/// Errors surfaced by the library. `Config` maps to CLI exit code 2,
/// everything else to 3.
#[derive(Error, Debug)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid encoding: {0}")]
    InvalidEncoding(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("generator retries exhausted after {retries} attempts; last soft join vector {soft:?}")]
    RetriesExhausted { retries: usize, soft: Vec<f64> },

    #[error("workload rejection rate exceeded cap {cap}: {accepted} accepted out of {attempted} attempts")]
    RejectionCap {
        cap: f64,
        accepted: usize,
        attempted: usize,
    },

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("bad file format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Tag an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// CLI exit code: 2 for configuration problems, 3 for stage failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Stage { source, .. } => source.exit_code().max(3),
            _ => 3,
        }
    }
}
