use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error class, used for process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    ShapeMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("tracklet {tracklet_id} has {frames} frames, fewer than L={groups}")]
    TooFewFrames {
        tracklet_id: String,
        frames: usize,
        groups: usize,
    },

    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("missing blob {path} referenced by record {tracklet_id}")]
    MissingBlob { path: PathBuf, tracklet_id: String },

    #[error("dimension mismatch in blob {path}: manifest declares D={declared}, blob holds {found} columns")]
    DimensionMismatch {
        path: PathBuf,
        declared: usize,
        found: usize,
    },

    #[error("blob {path} too short for record {tracklet_id}: needs bytes up to {needed}, has {len}")]
    TruncatedBlob {
        path: PathBuf,
        tracklet_id: String,
        needed: u64,
        len: u64,
    },

    #[error("blob {path} has {extra} trailing bytes not referenced by any record")]
    TrailingBytes { path: PathBuf, extra: u64 },

    #[error("non-finite value in record {tracklet_id} at frame {frame}, column {column}")]
    NonFinite {
        tracklet_id: String,
        frame: usize,
        column: usize,
    },

    #[error("modality violation: {0}")]
    ModalityViolation(String),

    #[error("no query has a valid positive match in the gallery ({skipped} skipped)")]
    EmptyEvaluation { skipped: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_) | Error::TooFewFrames { .. } => ErrorKind::Config,
            Error::Internal(_) => ErrorKind::Internal,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
