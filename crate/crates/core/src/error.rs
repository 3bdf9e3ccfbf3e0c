use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the quantile-regression pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("degenerate range: stage {stage} spans {range:e} (< 1e-9)")]
    DegenerateRange { stage: usize, range: f64 },

    #[error("contract error: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("search failed: every candidate diverged ({})", .diagnostics.join("; "))]
    SearchFailed { diagnostics: Vec<String> },

    #[error("archive error: {0}")]
    Archive(String),

    #[error("unsupported archive version {found} (this build reads up to {supported})")]
    ArchiveVersion { found: u32, supported: u32 },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable reason tag.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Invariant(_) => "invariant",
            Error::DegenerateRange { .. } => "degenerate-range",
            Error::Contract(_) => "contract",
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Training(_) => "training",
            Error::SearchFailed { .. } => "search-failed",
            Error::Archive(_) => "archive",
            Error::ArchiveVersion { .. } => "archive-version",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
