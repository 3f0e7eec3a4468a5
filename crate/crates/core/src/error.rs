use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("file not found: {0}")]
    NotFound(PathBuf),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("validation error at line {line}: {msg}")]
    Validation { line: usize, msg: String },
    #[error("value {value} outside [{min}, {max}]")]
    Range { value: f64, min: f64, max: f64 },
    #[error("no ratings for utterance {0}")]
    MissingTarget(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),
    #[error("audio ingestion failed for {path}: {msg}")]
    Audio { path: PathBuf, msg: String },
    #[error("unknown phoneme symbol {0:?}")]
    Vocabulary(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing predictions for {} utterance(s): {}", .0.len(), .0.join(", "))]
    Coverage(Vec<String>),
    #[error("lookup failed: {0}")]
    Lookup(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path)
        } else {
            Error::Io { path, source }
        }
    }

    /// Whether the error stems from bad user input (missing files, malformed
    /// files, bad flags) rather than a failure while running.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::NotFound(_)
                | Error::Parse { .. }
                | Error::Schema(_)
                | Error::Validation { .. }
                | Error::Config(_)
        )
    }

    /// Short machine-readable tag used in structured error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::NotFound(_) => "not_found",
            Error::Parse { .. } => "parse",
            Error::Schema(_) => "schema",
            Error::Validation { .. } => "validation",
            Error::Range { .. } => "range",
            Error::MissingTarget(_) => "missing_target",
            Error::Argument(_) => "argument",
            Error::UndefinedCorrelation(_) => "undefined_correlation",
            Error::Audio { .. } => "audio",
            Error::Vocabulary(_) => "vocabulary",
            Error::Config(_) => "config",
            Error::Coverage(_) => "coverage",
            Error::Lookup(_) => "lookup",
            Error::Checkpoint(_) => "checkpoint",
        }
    }
}
