use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no candidate has a usable cost")]
    NoFiniteCosts,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no successful episodes: {failed} of {total} episodes failed")]
    NoSuccessfulEpisodes { total: usize, failed: usize },
    #[error("unsupported dataset format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("task fingerprint mismatch: file has {found}, expected {expected}")]
    FingerprintMismatch { found: String, expected: String },
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("bad config file {path}: {reason}")]
    ConfigFile { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
