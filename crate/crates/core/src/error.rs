//! Error types shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("missing column '{name}' in {path}")]
    MissingColumn { path: PathBuf, name: String },
    #[error("empty input: {0} contains no valid rows")]
    EmptyInput(PathBuf),
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
    #[error("bin width {width_s}s does not divide the {window_s}s analysis window")]
    WindowMisaligned { width_s: u32, window_s: u32 },
    #[error("k={k} exceeds the {n} available points")]
    KTooLarge { k: usize, n: usize },
    #[error("covariance of component {0} is singular even after regularization")]
    SingularCovariance(usize),
    #[error("POI dataset is empty; the POI index is undefined")]
    EmptyPoiDataset,
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 input, 4 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::WindowMisaligned { .. } => 2,
            Error::MissingFile(_)
            | Error::MissingColumn { .. }
            | Error::EmptyInput(_)
            | Error::DegeneratePolygon(_)
            | Error::EmptyPoiDataset
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 3,
            Error::KTooLarge { .. } | Error::SingularCovariance(_) | Error::Internal(_) => 4,
        }
    }
}
