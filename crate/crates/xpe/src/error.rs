use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: row {row}, column \"{column}\": cannot parse {value:?}")]
    Parse { path: String, row: usize, column: String, value: String },
    /// Invalid flag combination; exit code 2.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    Bridge(String),
    #[error(transparent)]
    Core(#[from] xpe_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
