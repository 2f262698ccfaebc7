use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

/// Failure modes shared across the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("index {index} out of range (limit {limit})")]
    Index { index: usize, limit: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("state diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("sample error: {0}")]
    Sample(String),

    #[error("degenerate pair: {0}")]
    DegeneratePair(String),

    #[error("degenerate times in series: {indices:?}")]
    DegenerateTime { indices: Vec<usize> },

    #[error("bound inapplicable: N = {n} <= 2 d = {two_d}")]
    BoundInapplicable { n: usize, two_d: f64 },

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("data integrity error: {0}")]
    Integrity(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

impl LabError {
    /// Process exit code for the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::BoundInapplicable { .. } => 2,
            LabError::Divergence { .. } => 3,
            LabError::Integrity(_) => 4,
            _ => 1,
        }
    }
}
