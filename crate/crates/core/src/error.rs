use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the documented domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A multiplicative-function specification that cannot produce a value.
    #[error("spec error: {0}")]
    Spec(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("multiplicativity violated at ({m}, {n}): a({mn}) != a({m})·a({n})", mn = m * n)]
    NotMultiplicative { m: u64, n: u64 },

    #[error("coefficient table must satisfy a_1 = 1, found {0}")]
    NotNormalized(String),

    #[error("Hecke recurrence violated at {prime}^{exponent}")]
    RecurrenceViolation { prime: u64, exponent: u32 },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}
