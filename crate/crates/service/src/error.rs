use thiserror::Error;

use crate::session::Expect;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("session `{0}` is complete")]
    SessionComplete(String),
    #[error("session `{0}` was abandoned")]
    SessionAbandoned(String),
    #[error("step {step_ref} was already answered")]
    Duplicate { step_ref: usize },
    #[error("expected an answer for step {expected}, got step {got}")]
    StepMismatch { expected: usize, got: usize },
    #[error("step expects {expected:?}, got {got:?}")]
    WrongKind { expected: Expect, got: Expect },
    #[error("rating {0} outside 1..=5")]
    Rating(i64),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("storage error: {0}")]
    Storage(String),
    #[error("service unreachable: {0}")]
    Unreachable(String),
    #[error("server answered {status} {code}: {message}")]
    Remote { status: u16, code: String, message: String },
    #[error(transparent)]
    Core(trustloop::Error),
}

impl From<trustloop::Error> for ServiceError {
    fn from(e: trustloop::Error) -> Self {
        match e {
            trustloop::Error::RatingOutOfRange(r) => ServiceError::Rating(r),
            trustloop::Error::Io(e) => ServiceError::Storage(e.to_string()),
            e => ServiceError::Core(e),
        }
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Storage(e.to_string())
    }
}

impl ServiceError {
    /// Stable machine-readable code used in JSON error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::SessionComplete(_) => "session_complete",
            ServiceError::SessionAbandoned(_) => "session_abandoned",
            ServiceError::Duplicate { .. } => "duplicate_submission",
            ServiceError::StepMismatch { .. } => "step_mismatch",
            ServiceError::WrongKind { .. } => "wrong_rating_kind",
            ServiceError::Rating(_) => "rating_out_of_range",
            ServiceError::Invalid(_) => "invalid_request",
            ServiceError::Storage(_) => "storage_error",
            ServiceError::Unreachable(_) => "unreachable",
            ServiceError::Remote { .. } => "remote_error",
            ServiceError::Core(_) => "internal_error",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            ServiceError::UnknownSession(_) => 404,
            ServiceError::SessionComplete(_) | ServiceError::Duplicate { .. } | ServiceError::StepMismatch { .. } => 409,
            ServiceError::SessionAbandoned(_) => 410,
            ServiceError::WrongKind { .. } | ServiceError::Rating(_) | ServiceError::Invalid(_) => 400,
            ServiceError::Unreachable(_) => 503,
            ServiceError::Remote { status, .. } => *status,
            ServiceError::Storage(_) | ServiceError::Core(_) => 500,
        }
    }
}
