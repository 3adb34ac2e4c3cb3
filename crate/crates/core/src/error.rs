//! Error type shared by every analysis module.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("model `{model}`: expected {expected} bytes ({rows}x{cols} f32), file has {actual}")]
    ShapeMismatch {
        model: String,
        rows: usize,
        cols: usize,
        expected: u64,
        actual: u64,
    },

    #[error("model `{model}`: non-finite value at row {row}, column {col}")]
    NonFinite { model: String, row: usize, col: usize },

    #[error("token count mismatch: {context} declares {declared} tokens, corpus has {actual}")]
    TokenCountMismatch {
        context: String,
        declared: usize,
        actual: usize,
    },

    #[error("model `{model}` uses corpus `{corpus}`, dataset corpus is `{expected}`")]
    CorpusMismatch {
        model: String,
        corpus: String,
        expected: String,
    },

    #[error("invalid model id: {0}")]
    InvalidModelId(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("index out of bounds: {0}")]
    OutOfBounds(String),

    #[error("conflicting labels for sentence {sentence}, token {token}: `{first}` vs `{second}`")]
    LabelConflict {
        sentence: usize,
        token: usize,
        first: String,
        second: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("need at least {needed} models, dataset has {actual}")]
    TooFewModels { needed: usize, actual: usize },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("ill-conditioned covariance: {0}")]
    IllConditioned(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("scorer `{scorer}` failed at k={k}: {message}")]
    Scorer {
        scorer: String,
        k: usize,
        message: String,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical routines (singular systems,
    /// degenerate spectra) as opposed to bad input files or arguments.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular(_)
                | Error::IllConditioned(_)
                | Error::Degenerate(_)
                | Error::InsufficientData(_)
                | Error::Scorer { .. }
        )
    }
}
