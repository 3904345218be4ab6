use std::path::PathBuf;

use thiserror::Error;

use crate::statistics::TermId;

pub type Result<T, E = RemError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum RemError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("network {network}: event {order} references unknown actor `{actor}`")]
    UnknownActor {
        network: String,
        order: i64,
        actor: String,
    },

    #[error("network {network}: event {order} is a self-loop on `{actor}`")]
    SelfLoop {
        network: String,
        order: i64,
        actor: String,
    },

    #[error("network {network}: duplicate actor id `{actor}`")]
    DuplicateActor { network: String, actor: String },

    #[error("network {network}: {message}")]
    InvalidNetwork { network: String, message: String },

    #[error("actor index {0} is outside the risk set")]
    ActorOutOfRange(usize),

    #[error("self-loop dyad ({0}, {0}) is not in the risk set")]
    SelfLoopDyad(usize),

    #[error("duplicate term {0} in model specification")]
    DuplicateTerm(TermId),

    #[error("unknown term name `{0}`")]
    UnknownTerm(String),

    #[error("coefficient vector has length {got}, model has {expected} terms")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("AICc undefined: {events} events is not more than {terms} terms + 1")]
    InadmissibleModel { terms: usize, events: usize },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("{0}")]
    Degenerate(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl RemError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RemError::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by the input data rather than by numerics or arguments.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            RemError::Io { .. }
                | RemError::MalformedRow { .. }
                | RemError::UnknownActor { .. }
                | RemError::SelfLoop { .. }
                | RemError::DuplicateActor { .. }
                | RemError::InvalidNetwork { .. }
                | RemError::Json(_)
        )
    }

    pub fn is_numerical_error(&self) -> bool {
        matches!(
            self,
            RemError::NonFinite(_) | RemError::Degenerate(_) | RemError::InadmissibleModel { .. }
        )
    }
}
