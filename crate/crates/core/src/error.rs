use thiserror::Error;

/// Errors raised by the library. Each numerical variant names the module,
/// operation and offending state so that CLI reports can be triaged.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("singularity in {op}: particles {i} and {j} coincide")]
    Singularity { op: &'static str, i: usize, j: usize },
    #[error("instability in {op}: non-finite coefficient at mode {mode:?}")]
    Instability { op: &'static str, mode: Vec<i64> },
    #[error("positivity violated in {op} at t = {t}: minimum grid value {min:e}")]
    Positivity { op: &'static str, t: f64, min: f64 },
    #[error("internal consistency check failed in {op}: {detail}")]
    Consistency { op: &'static str, detail: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit status for the CLI: 2 for validation problems, 3 for numerics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Singularity { .. }
            | Error::Instability { .. }
            | Error::Positivity { .. }
            | Error::Consistency { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
