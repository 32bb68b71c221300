use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteData { row: usize, col: usize },

    #[error("source class {class} has no samples")]
    EmptyClass { class: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty matrix: {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("training set covers no classes")]
    DegenerateTrainingSet,

    #[error("sample {index} has zero norm")]
    ZeroNormSample { index: usize },

    #[error("similarity matrix has no non-zero pairs")]
    NoPairs,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid pseudo-label state: {0}")]
    InvalidPseudoLabels(String),

    #[error("eigensolver failed: {0}")]
    EigSolverFailure(String),

    #[error("centering scatter has numerical rank {rank}, below subspace dimension {dim}")]
    SingularSystem { rank: usize, dim: usize },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("checksum mismatch for {path}: expected {expected}, found {found}")]
    ChecksumMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("shape mismatch for {path}: expected {expected}, found {found}")]
    ShapeMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
