use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure surfaced by the library.
///
/// Each variant maps to exactly one stable machine code (see [`Error::code`]),
/// which the HTTP layer and the CLI report verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("model is invalid: {0}")]
    ModelInvalid(ValidationReport),

    #[error("{what} index {index} out of range (size {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("observation has zero probability under the predicted belief")]
    ImpossibleObservation { unnormalized: Vec<f64> },

    #[error("state {0} is terminal")]
    TerminalState(usize),

    #[error("incompatible: {0}")]
    Incompatible(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    Numeric(String),

    #[error("training diverged at iteration {iteration}: {reason}")]
    TrainingAborted {
        iteration: usize,
        reason: String,
        last_good: Box<crate::policy::PolicyParameters>,
    },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("ingest error at line {line}: {message}")]
    Ingest { line: usize, message: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("session is finished")]
    Finished,

    #[error("out of range: {0}")]
    Range(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("policy load error: {0}")]
    Load(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ModelInvalid(_) => "model_invalid",
            Error::Index { .. } => "index",
            Error::ImpossibleObservation { .. } => "impossible_observation",
            Error::TerminalState(_) => "terminal_state",
            Error::Incompatible(_) => "incompatible",
            Error::Config(_) => "config",
            Error::Shape(_) => "shape",
            Error::Numeric(_) => "numeric",
            Error::TrainingAborted { .. } => "training_aborted",
            Error::NotFound(_) => "not_found",
            Error::Conflict(_) => "conflict",
            Error::Ingest { .. } => "ingest",
            Error::EmptyInput(_) => "empty_input",
            Error::Validation(_) => "validation",
            Error::Finished => "finished",
            Error::Range(_) => "range",
            Error::Precondition(_) => "precondition",
            Error::Load(_) => "load",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn index(what: &'static str, index: usize, len: usize) -> Self {
        Error::Index { what, index, len }
    }
}
