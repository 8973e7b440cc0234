use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {what} must be nonnegative and finite, got {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("f(γ) = γ·f'(γ) has no positive root for shape parameter M = {m}")]
    NoPositiveRoot { m: u32 },

    #[error("no sign change of f(γ) - γ·f'(γ) on [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("sign violation: {0}")]
    Sign(String),

    #[error("index out of range: {what} = {index}, limit {limit}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("invalid permutation of users: {0:?}")]
    InvalidPermutation(Vec<usize>),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
