use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no annotations")]
    NoAnnotations,

    #[error("annotation tables disagree on shape")]
    AnnotationShape,

    #[error("invalid player tag {0:?}")]
    InvalidPlayerTag(String),

    #[error("mode {mode} has no stage {stage}")]
    InvalidStage { mode: String, stage: u8 },

    #[error("few-shot mode needs {needed} exemplars, got {got}")]
    MissingExemplars { needed: usize, got: usize },

    #[error("unknown mode {0:?}; valid modes: zero-shot, zero-shot-cot, few-shot[-cot]:<k>, t3, t3m, t3d, t2")]
    UnknownMode(String),

    #[error("bad table shape at line {line}")]
    BadTableShape { line: usize },

    #[error("malformed record at line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("duplicate id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("empty commentary for instance {0:?}")]
    EmptyCommentary(String),

    #[error("backend: {0}")]
    Backend(String),

    #[error("no valid QA pairs")]
    NoValidQaPairs,

    #[error("coverage curve needs at least one document")]
    EmptyCoverage,

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{context}: {source}")]
    Io {
        context: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            context: path.into(),
            source,
        }
    }
}
