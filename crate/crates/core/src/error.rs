use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite state at step {step} ({substep})")]
    NonFiniteState { step: usize, substep: &'static str },

    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("epsilon must be nonzero")]
    EpsilonZero,

    #[error("hamiltonian does not provide second derivatives")]
    MissingHessian,

    #[error("gradient certification failed for {what}: relative error {rel_err:e}")]
    GradientCertificationFailed { what: String, rel_err: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::ShapeMismatch {
            what: what.to_string(),
            expected,
            got,
        });
    }
    Ok(())
}
