use thiserror::Error;

/// Errors produced by graph checks, the controller, the plant and the
/// simulation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("NotBalanced: sign propagation contradicts at edge ({0}, {1})")]
    NotBalanced(usize, usize),

    #[error("InconsistentSigns: a[{i}][{j}] and a[{j}][{i}] have opposite signs")]
    InconsistentSigns { i: usize, j: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("{name} must be positive, got {value}")]
    NonPositiveCoefficient { name: &'static str, value: f64 },

    #[error("ZeroScaling: scaling entry {0} is zero")]
    ZeroScaling(usize),

    #[error("DimensionMismatch: {what} expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("{field} {reason}")]
    ParamOutOfRange { field: &'static str, reason: String },

    #[error("NonFinite: {0}")]
    NonFinite(&'static str),

    #[error("Diverged at step {step}, agent {agent}")]
    Diverged { step: usize, agent: usize },

    #[error("ConfigInvalid: {0}")]
    ConfigInvalid(String),

    #[error("WindowTooLong: tail {tail} exceeds phase length {phase_len}")]
    WindowTooLong { tail: usize, phase_len: usize },

    #[error("MalformedTrace: {0}")]
    MalformedTrace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_mismatch(
    what: &'static str,
    expected: impl ToString,
    found: impl ToString,
) -> Error {
    Error::DimensionMismatch {
        what,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
