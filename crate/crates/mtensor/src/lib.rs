//! File formats and end-to-end pipelines on top of [`mtensor_core`].
//!
//! * [`mtd1`]: raw dense tensors.
//! * [`image`]: PPM/PGM images as `H x W x C` tensors with values in `[0, 1]`.
//! * [`xyz`]: whitespace-delimited point clouds.
//! * [`bundle`]: factor directories, network checkpoints and IMTD model bundles.
//! * [`history`]: solver history as JSON lines.

pub mod bundle;
pub mod history;
pub mod image;
pub mod mtd1;
pub mod xyz;

use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] mtensor_core::Error),
}

pub type Result<T> = std::result::Result<T, FormatError>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn malformed(path: &Path, message: impl Into<String>) -> FormatError {
    FormatError::Malformed {
        path: path.to_path_buf(),
        message: message.into(),
    }
}
