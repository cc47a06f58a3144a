use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("computation record already consumed by backward; run a new forward pass")]
    StaleGraph,

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("student {student} has no history in the vocabulary of {target}")]
    EmptyHistory { student: String, target: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Parses JSON, naming the offending key path on failure.
    pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(context: &str, text: &str) -> Result<T> {
        let mut de = serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            let context = if path == "." { context.to_string() } else { format!("{context} at `{path}`") };
            Error::json(context, e.into_inner())
        })
    }

    /// Process exit code: 1 usage, 2 data validation, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::Validation(_)
            | Error::Parse { .. }
            | Error::EmptyHistory { .. }
            | Error::Io { .. }
            | Error::Json { .. } => 2,
            Error::Dimension { .. }
            | Error::StaleGraph
            | Error::NonFinite(_)
            | Error::Singular(_) => 3,
        }
    }
}
