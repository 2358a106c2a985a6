//! Discrete-time echo learning: nudged echo rollouts and the difference
//! estimators evaluated at the fractional echo states.

use crate::error::{check_len, Error, Result};
use crate::integrator::{leapfrog_at, SeparableHamiltonian, Trajectory};
use crate::phase::PhaseState;
use crate::precision::Precision;

/// Loss gradients with respect to the forward states, `grads[k]` belonging to
/// state k (so `grads[K]` is the final state). Each entry is `[∂φ, ∂π]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NudgeSequence {
    pub grads: Vec<Vec<f64>>,
    pub gamma: f64,
}

impl NudgeSequence {
    pub fn zeros(steps: usize, n: usize) -> Self {
        Self {
            grads: vec![vec![0.0; 2 * n]; steps + 1],
            gamma: 1.0,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn steps(&self) -> usize {
        self.grads.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EchoPair {
    pub plus: Trajectory,
    pub minus: Trajectory,
    pub epsilon: f64,
    pub gamma: f64,
    pub precision: Precision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhelGradients {
    pub d_theta: Vec<f64>,
    /// Input gradients in forward order.
    pub d_inputs: Vec<Vec<f64>>,
    /// State sensitivities for forward states 0..=K.
    pub d_states: Vec<PhaseState>,
}

/// Echo rollout from `phi0` (the conjugated final forward state). The initial
/// state and every step are nudged by `epsilon_signed·Σ_x(γ·y)`.
#[allow(clippy::too_many_arguments)]
pub fn echo_rollout<H: SeparableHamiltonian + ?Sized>(
    h: &H,
    phi0: &PhaseState,
    reversed_inputs: &[Vec<f64>],
    nudges: &NudgeSequence,
    epsilon_signed: f64,
    step: f64,
    precision: Precision,
) -> Result<Trajectory> {
    if epsilon_signed == 0.0 {
        return Err(Error::EpsilonZero);
    }
    let k_total = reversed_inputs.len();
    check_len("echo state", h.dim(), phi0.dim())?;
    check_len("echo nudges", k_total + 1, nudges.grads.len())?;
    let amp = epsilon_signed * nudges.gamma;
    let mut initial = phi0.clone();
    initial.add_swapped(amp, &nudges.grads[k_total]);
    precision.round_slice(initial.as_mut_slice());
    let mut records = Vec::with_capacity(k_total);
    let mut cur = initial.clone();
    for (k, u) in reversed_inputs.iter().enumerate() {
        check_len("echo input", h.input_dim(), u.len())?;
        let mut rec = leapfrog_at(h, &cur, u, step, precision, k)?;
        rec.s_next.add_swapped(amp, &nudges.grads[k_total - 1 - k]);
        precision.round_slice(rec.s_next.as_mut_slice());
        if !rec.s_next.is_finite() {
            return Err(Error::NonFiniteState {
                step: k,
                substep: "nudge",
            });
        }
        cur = rec.s_next.clone();
        records.push(rec);
    }
    Ok(Trajectory {
        initial,
        records,
        inputs: reversed_inputs.to_vec(),
        step,
    })
}

/// Difference estimators −(step/2ε)·Σ_k [∇H^{1/2}(+ε) − ∇H^{1/2}(−ε)], γ-corrected.
pub fn rhel_gradients<H: SeparableHamiltonian + ?Sized>(
    pair: &EchoPair,
    h: &H,
    reversed_inputs: &[Vec<f64>],
) -> Result<RhelGradients> {
    if pair.epsilon == 0.0 {
        return Err(Error::EpsilonZero);
    }
    let k_total = pair.plus.len();
    check_len("echo pair length", k_total, pair.minus.len())?;
    check_len("reversed inputs", k_total, reversed_inputs.len())?;
    let (p, m) = (h.num_params(), h.input_dim());
    let prec = pair.precision;
    let step = pair.plus.step;
    let c = step / (2.0 * pair.epsilon * pair.gamma);
    let mut d_theta = vec![0.0; p];
    let mut d_inputs = vec![vec![0.0; m]; k_total];
    let (mut gp, mut gm) = (vec![0.0; p], vec![0.0; p]);
    let (mut up, mut um) = (vec![0.0; m], vec![0.0; m]);
    for k in 0..k_total {
        let u = &reversed_inputs[k];
        let (rp, rm) = (&pair.plus.records[k], &pair.minus.records[k]);
        half_step_grads(h, rp, u, &mut gp, &mut up, prec);
        half_step_grads(h, rm, u, &mut gm, &mut um, prec);
        for i in 0..p {
            d_theta[i] -= c * (gp[i] - gm[i]);
        }
        let du = &mut d_inputs[k_total - 1 - k];
        for j in 0..m {
            du[j] = prec.round(-c * (up[j] - um[j]));
        }
    }
    prec.round_slice(&mut d_theta);
    let cs = 1.0 / (2.0 * pair.epsilon * pair.gamma);
    let mut d_states = Vec::with_capacity(k_total + 1);
    for j in 0..=k_total {
        let (sp, sm) = (pair.plus.state(k_total - j), pair.minus.state(k_total - j));
        let diff: Vec<f64> = sp
            .as_slice()
            .iter()
            .zip(sm.as_slice())
            .map(|(a, b)| prec.round(cs * (a - b)))
            .collect();
        d_states.push(PhaseState::from_flat(diff)?.swap());
    }
    Ok(RhelGradients {
        d_theta,
        d_inputs,
        d_states,
    })
}

fn half_step_grads<H: SeparableHamiltonian + ?Sized>(
    h: &H,
    rec: &crate::integrator::StepRecord,
    u: &[f64],
    g_theta: &mut [f64],
    g_u: &mut [f64],
    prec: Precision,
) {
    g_theta.iter_mut().for_each(|x| *x = 0.0);
    g_u.iter_mut().for_each(|x| *x = 0.0);
    h.param_grad(&rec.s_third, u, 0.5, g_theta);
    h.param_grad(&rec.s_twothird, u, 0.5, g_theta);
    h.potential_input_grad(rec.s_third.phi(), u, 0.5, g_u);
    h.potential_input_grad(rec.s_twothird.phi(), u, 0.5, g_u);
    prec.round_slice(g_theta);
    prec.round_slice(g_u);
}

/// Runs both echoes from the forward final state and returns the estimators.
pub fn hru_echo_pair<H: SeparableHamiltonian + ?Sized>(
    h: &H,
    phi_final: &PhaseState,
    incoming: &NudgeSequence,
    reversed_inputs: &[Vec<f64>],
    epsilon: f64,
    step: f64,
    precision: Precision,
) -> Result<EchoPair> {
    let start = phi_final.conjugate();
    let (plus, minus) = rayon::join(
        || echo_rollout(h, &start, reversed_inputs, incoming, epsilon, step, precision),
        || echo_rollout(h, &start, reversed_inputs, incoming, -epsilon, step, precision),
    );
    Ok(EchoPair {
        plus: plus?,
        minus: minus?,
        epsilon,
        gamma: incoming.gamma,
        precision,
    })
}

/// Echo learning on a single HRU. Returns (Δθ, Δu) with Δu in forward order.
pub fn hru_backward<H: SeparableHamiltonian + ?Sized>(
    h: &H,
    phi_final: &PhaseState,
    incoming: &NudgeSequence,
    reversed_inputs: &[Vec<f64>],
    epsilon: f64,
    step: f64,
    precision: Precision,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let pair = hru_echo_pair(h, phi_final, incoming, reversed_inputs, epsilon, step, precision)?;
    let g = rhel_gradients(&pair, h, reversed_inputs)?;
    Ok((g.d_theta, g.d_inputs))
}

/// Reverses a forward input sequence for the echo.
pub fn reversed(inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    inputs.iter().rev().cloned().collect()
}
