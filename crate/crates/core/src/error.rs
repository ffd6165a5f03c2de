use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("{field} missing for {len} consecutive day(s) from {from} to {to} (at most {max} can be interpolated)")]
    Gap {
        field: &'static str,
        from: String,
        to: String,
        len: usize,
        max: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("no treated days: no day reaches the exposure threshold")]
    NoTreatedDays,

    #[error("no control days: every day reaches the exposure threshold")]
    NoControlDays,

    #[error("treatment indicator has a single class")]
    SingleClass,

    #[error("design matrix is rank deficient; collinear column(s): {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("missing artifact {path}: run the `{stage}` stage first")]
    MissingArtifact { path: PathBuf, stage: &'static str },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for input/validation problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::RankDeficient { .. } | Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}
