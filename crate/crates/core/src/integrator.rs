use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::sigmoid;
use crate::phase::PhaseState;
use crate::precision::Precision;

/// A Hamiltonian H(φ, π, u; θ) = T(π; θ) + V(φ, u; θ).
///
/// Gradient methods accumulate into `out` with a `scale` factor so callers can
/// sum contributions without temporaries. The force VJPs are the only second
/// derivative access used by the adjoint; implementations that cannot provide
/// them keep the default, which reports [`Error::MissingHessian`].
pub trait SeparableHamiltonian: Sync {
    fn dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    fn num_params(&self) -> usize {
        self.params().len()
    }

    fn kinetic(&self, pi: &[f64]) -> f64;
    fn potential(&self, phi: &[f64], u: &[f64]) -> f64;

    /// out = ∇_π T.
    fn grad_kinetic(&self, pi: &[f64], out: &mut [f64]);
    /// out = ∇_φ V.
    fn grad_potential(&self, phi: &[f64], u: &[f64], out: &mut [f64]);

    /// out += scale * ∇_θ T.
    fn kinetic_param_grad(&self, pi: &[f64], scale: f64, out: &mut [f64]);
    /// out += scale * ∇_θ V.
    fn potential_param_grad(&self, phi: &[f64], u: &[f64], scale: f64, out: &mut [f64]);
    /// out += scale * ∇_u V.
    fn potential_input_grad(&self, phi: &[f64], u: &[f64], scale: f64, out: &mut [f64]);

    /// Accumulates wᵀ ∂(∇_π T)/∂(π, θ).
    fn kinetic_force_vjp(
        &self,
        _pi: &[f64],
        _w: &[f64],
        _d_pi: &mut [f64],
        _d_theta: &mut [f64],
    ) -> Result<()> {
        Err(Error::MissingHessian)
    }

    /// Accumulates wᵀ ∂(∇_φ V)/∂(φ, θ, u).
    fn potential_force_vjp(
        &self,
        _phi: &[f64],
        _u: &[f64],
        _w: &[f64],
        _d_phi: &mut [f64],
        _d_theta: &mut [f64],
        _d_u: &mut [f64],
    ) -> Result<()> {
        Err(Error::MissingHessian)
    }

    fn energy(&self, s: &PhaseState, u: &[f64]) -> f64 {
        self.kinetic(s.pi()) + self.potential(s.phi(), u)
    }

    /// out += scale * ∇_θ H at `s`.
    fn param_grad(&self, s: &PhaseState, u: &[f64], scale: f64, out: &mut [f64]) {
        self.kinetic_param_grad(s.pi(), scale, out);
        self.potential_param_grad(s.phi(), u, scale, out);
    }
}

/// States produced by one leapfrog step: after the first half drift, after the
/// kick, and after the second half drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub s_third: PhaseState,
    pub s_twothird: PhaseState,
    pub s_next: PhaseState,
}

/// A recorded rollout. `records[k]` is the step that consumes `inputs[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial: PhaseState,
    pub records: Vec<StepRecord>,
    pub inputs: Vec<Vec<f64>>,
    pub step: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Integer state k for k in 0..=K.
    pub fn state(&self, k: usize) -> &PhaseState {
        if k == 0 {
            &self.initial
        } else {
            &self.records[k - 1].s_next
        }
    }

    pub fn final_state(&self) -> &PhaseState {
        self.state(self.len())
    }
}

/// How a raw step-size parameter maps to the effective step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeltaParam {
    Direct,
    Sigmoid,
}

pub fn effective_delta(raw: f64, kind: DeltaParam) -> f64 {
    match kind {
        DeltaParam::Direct => raw,
        DeltaParam::Sigmoid => sigmoid(raw),
    }
}

fn finite_or(s: &PhaseState, step: usize, substep: &'static str) -> Result<()> {
    if s.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteState { step, substep })
    }
}

pub(crate) fn leapfrog_at<H: SeparableHamiltonian + ?Sized>(
    h: &H,
    s: &PhaseState,
    u: &[f64],
    step: f64,
    precision: Precision,
    index: usize,
) -> Result<StepRecord> {
    let n = h.dim();
    let mut g = vec![0.0; n];

    let mut a = s.clone();
    h.grad_kinetic(a.pi(), &mut g);
    for (p, gi) in a.phi_mut().iter_mut().zip(&g) {
        *p += 0.5 * step * gi;
    }
    precision.round_slice(a.as_mut_slice());
    finite_or(&a, index, "first drift")?;

    let mut b = a.clone();
    h.grad_potential(b.phi(), u, &mut g);
    for (p, gi) in b.pi_mut().iter_mut().zip(&g) {
        *p -= step * gi;
    }
    precision.round_slice(b.as_mut_slice());
    finite_or(&b, index, "kick")?;

    let mut c = b.clone();
    h.grad_kinetic(c.pi(), &mut g);
    for (p, gi) in c.phi_mut().iter_mut().zip(&g) {
        *p += 0.5 * step * gi;
    }
    precision.round_slice(c.as_mut_slice());
    finite_or(&c, index, "second drift")?;

    Ok(StepRecord {
        s_third: a,
        s_twothird: b,
        s_next: c,
    })
}

/// One symmetric leapfrog step M_{H,δ}.
pub fn leapfrog_step<H: SeparableHamiltonian + ?Sized>(
    h: &H,
    s: &PhaseState,
    u: &[f64],
    step: f64,
    precision: Precision,
) -> Result<StepRecord> {
    check_len("leapfrog state", h.dim(), s.dim())?;
    check_len("leapfrog input", h.input_dim(), u.len())?;
    leapfrog_at(h, s, u, step, precision, 0)
}

/// Integrates `inputs.len()` leapfrog steps from `x0`.
pub fn rollout<H: SeparableHamiltonian + ?Sized>(
    h: &H,
    x0: &PhaseState,
    inputs: &[Vec<f64>],
    step: f64,
    precision: Precision,
) -> Result<Trajectory> {
    check_len("rollout state", h.dim(), x0.dim())?;
    let mut initial = x0.clone();
    precision.round_slice(initial.as_mut_slice());
    let mut records = Vec::with_capacity(inputs.len());
    let mut cur = initial.clone();
    for (k, u) in inputs.iter().enumerate() {
        check_len("rollout input", h.input_dim(), u.len())?;
        let rec = leapfrog_at(h, &cur, u, step, precision, k)?;
        cur = rec.s_next.clone();
        records.push(rec);
    }
    Ok(Trajectory {
        initial,
        records,
        inputs: inputs.to_vec(),
        step,
    })
}

/// Runs the conjugated final state backwards through the reversed inputs and
/// returns the largest deviation from the recorded states.
pub fn reverse_check<H: SeparableHamiltonian + ?Sized>(h: &H, traj: &Trajectory) -> Result<f64> {
    let k_total = traj.len();
    let mut cur = traj.final_state().conjugate();
    let mut worst: f64 = 0.0;
    for k in 0..k_total {
        let u = &traj.inputs[k_total - 1 - k];
        let rec = leapfrog_at(h, &cur, u, traj.step, Precision::F64, k)?;
        cur = rec.s_next;
        let target = traj.state(k_total - 1 - k).conjugate();
        worst = worst.max(cur.max_abs_diff(&target));
    }
    Ok(worst)
}
