use std::path::PathBuf;

/// Errors produced by every layer of the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("representation error: {0}")]
    Representation(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("stats error: {0}")]
    Stats(String),

    #[error("training diverged at epoch {epoch}, batch {batch} (parameter norms: {norms})")]
    Diverged { epoch: usize, batch: usize, norms: String },

    #[error("sample {id}: {source}")]
    Sample {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn in_sample(self, id: impl Into<String>) -> Self {
        Error::Sample {
            id: id.into(),
            source: Box::new(self),
        }
    }
}
