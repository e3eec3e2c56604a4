use thiserror::Error;

use crate::network::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("duplicate entry ({row}, {col}) in {what}")]
    DuplicateEntry { what: String, row: usize, col: usize },

    #[error("index ({row}, {col}) out of bounds for {n_rows}x{n_cols} matrix")]
    IndexOutOfBounds { row: usize, col: usize, n_rows: usize, n_cols: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not positive semidefinite: {0}")]
    NotPositiveSemidefinite(String),

    #[error("layout violated: {}", fmt_violations(.0))]
    Layout(Vec<Violation>),

    #[error("{flagged} of {total} paths produced non-finite values (limit 1%)")]
    TooManyFlaggedPaths { flagged: usize, total: usize },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("jump family is not dominated by the reference process: {0}")]
    DominationViolated(String),

    #[error("numerical overflow: {0}")]
    Overflow(String),

    #[error("config: {0}")]
    Config(String),

    #[error("config line {line}, field `{field}`: {message}")]
    ConfigAt { line: usize, field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_violations(v: &[Violation]) -> String {
    let shown: Vec<String> = v.iter().take(5).map(|x| x.to_string()).collect();
    if v.len() > 5 {
        format!("{} (+{} more)", shown.join("; "), v.len() - 5)
    } else {
        shown.join("; ")
    }
}

pub type Result<T> = std::result::Result<T, Error>;
