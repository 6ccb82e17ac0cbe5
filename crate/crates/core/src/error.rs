//! Error type shared across the library.
//!
//! Variants are grouped by how the CLI maps them to exit codes: configuration
//! and source-program problems, runtime data problems, and singularities.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch {}x{} vs {}x{}", left.0, left.1, right.0, right.1)]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    /// Matrix inversion hit a pivot below the relative threshold.
    #[error("singular matrix: pivot {pivot} below threshold")]
    Singular { pivot: usize },

    /// A Sherman-Morrison denominator vanished; `step` is the index of the
    /// rank-1 update within the sequential chain.
    #[error("singular update: Sherman-Morrison denominator vanished at step {step}")]
    UpdateSingular { step: usize },

    #[error("{op}: non-finite entries in result")]
    NonFinite { op: &'static str },

    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("line {line}: name `{name}` used before definition")]
    UndefinedName { name: String, line: usize },

    #[error("line {line}: name `{name}` defined twice")]
    Redefinition { name: String, line: usize },

    #[error("unbound dimension symbol `{symbol}` (bind it with --dims)")]
    UnboundDim { symbol: String },

    #[error("shape error in statement `{statement}`: {detail}")]
    ShapeCheck { statement: String, detail: String },

    #[error("configuration error: {msg}")]
    Config { msg: String },

    /// Malformed stream records, bad matrix files, or updates whose factor
    /// lengths do not match the target matrix.
    #[error("data error: {msg}")]
    Data { msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("internal invariant violation: {msg}")]
    Internal { msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config { msg: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data { msg: msg.into() }
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal { msg: msg.into() }
    }
}
