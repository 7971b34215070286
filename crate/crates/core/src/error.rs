use std::path::PathBuf;

use thiserror::Error;

/// Reasons a PGM byte stream was rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PgmErrorKind {
    UnsupportedMagic(String),
    MalformedHeader(&'static str),
    MaxvalOutOfRange(u64),
    Truncated { expected: usize, found: usize },
    BadSample,
    SampleAboveMaxval(u64),
}

impl std::fmt::Display for PgmErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PgmErrorKind::UnsupportedMagic(m) => write!(f, "unsupported magic number {m:?}"),
            PgmErrorKind::MalformedHeader(what) => write!(f, "malformed header: {what}"),
            PgmErrorKind::MaxvalOutOfRange(v) => write!(f, "maxval {v} outside 1..=65535"),
            PgmErrorKind::Truncated { expected, found } => {
                write!(f, "truncated raster: expected {expected} bytes, found {found}")
            }
            PgmErrorKind::BadSample => write!(f, "unparsable ASCII sample"),
            PgmErrorKind::SampleAboveMaxval(v) => write!(f, "sample {v} exceeds maxval"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("pgm parse error at byte {offset}: {kind}")]
    Pgm { offset: usize, kind: PgmErrorKind },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("matrix is not positive definite: pivot {index} = {pivot:e}")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::Contract(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
