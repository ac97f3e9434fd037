use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    InvalidDimension(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("{0}")]
    Format(String),

    #[error("non-finite value encountered at iteration {iteration}")]
    NumericFailure { iteration: usize },

    #[error("sample `{id}`: {detail}")]
    Dataset { id: String, detail: String },

    #[error("{0}")]
    InvalidDataset(String),

    #[error("pair {index}: {source}")]
    Pair {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {detail}", path.display())]
    Image { path: PathBuf, detail: String },
}

impl Error {
    /// Stable machine-readable code, printed by the CLI as `error: <code>: <detail>`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidDimension(_) => "invalid-dimension",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Format(_) => "format",
            Error::NumericFailure { .. } => "numeric-failure",
            Error::Dataset { .. } => "dataset",
            Error::InvalidDataset(_) => "invalid-dataset",
            Error::Pair { source, .. } => source.code(),
            Error::Io { .. } => "io",
            Error::Image { .. } => "image",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn ensure_same_dims(
    what: &str,
    (ah, aw): (usize, usize),
    (bh, bw): (usize, usize),
) -> Result<()> {
    if ah != bh || aw != bw {
        return Err(Error::InvalidArgument(format!(
            "{what}: shape mismatch {ah}x{aw} vs {bh}x{bw}"
        )));
    }
    Ok(())
}
