use thiserror::Error;

/// Errors raised by the library. `is_usage` separates configuration and
/// argument problems from numeric or domain failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("scale guard: {0}")]
    ScaleGuard(String),
    #[error("invalid options: {0}")]
    Options(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(String),
}

impl Error {
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Io { .. } | Error::Csv(_))
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
