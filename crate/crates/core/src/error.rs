use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {what}: {message}")]
    Parse { what: String, message: String },

    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),

    #[error("infeasible catalog shape: {0}")]
    InfeasibleShape(String),

    #[error("unknown category id `{0}`")]
    UnknownCategory(String),

    #[error("unknown skill id `{0}`")]
    UnknownSkill(String),

    #[error("invalid prompt catalog: {0}")]
    InvalidPrompts(String),

    #[error("missing binding for placeholder `{0}`")]
    MissingBinding(String),

    #[error("action `{0}` is masked in the current dialog state")]
    MaskedAction(&'static str),

    #[error("episode already terminated")]
    EpisodeTerminated,

    #[error("intent `{0}` requires a slot")]
    MissingSlot(&'static str),

    #[error("slot cannot be resolved: {0}")]
    UnresolvableSlot(String),

    #[error("no utterance template for intent `{0}`")]
    NoTemplate(&'static str),

    #[error("invalid rules: {0}")]
    InvalidRules(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("architecture mismatch: {0}")]
    Architecture(String),

    #[error("every action is masked")]
    EmptyMask,

    #[error("replay buffer holds {size} transitions, cannot sample {requested}")]
    InsufficientBuffer { size: usize, requested: usize },

    #[error("non-finite loss at {0}")]
    Divergence(String),

    #[error("empty training split")]
    EmptyDataset,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("unknown session `{0}`")]
    UnknownSession(String),

    #[error("session `{0}` has already ended")]
    SessionTerminal(String),

    #[error("policy `{0}` is not available: no checkpoint loaded")]
    PolicyUnavailable(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }
}
