//! Hamiltonian recurrent units trained by forward-only echo gradients.

pub mod baselines;
pub mod certify;
pub mod error;
pub mod hssm;
pub mod integrator;
pub mod linalg;
pub mod linear;
pub mod nonlinear;
pub mod phase;
pub mod precision;
pub mod rhel;
pub mod toy;

pub use error::{Error, Result};
pub use integrator::{
    effective_delta, leapfrog_step, reverse_check, rollout, DeltaParam, SeparableHamiltonian,
    StepRecord, Trajectory,
};
pub use phase::PhaseState;
pub use precision::Precision;
