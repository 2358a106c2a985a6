//! Reference gradients: the exact discrete adjoint through every leapfrog
//! sub-step, a central finite-difference oracle, and gradient comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::integrator::{SeparableHamiltonian, Trajectory};
use crate::phase::PhaseState;
use crate::precision::Precision;
use crate::rhel::NudgeSequence;

#[derive(Debug, Clone, PartialEq)]
pub struct BpttGradients {
    pub d_theta: Vec<f64>,
    /// Input gradients in forward order.
    pub d_inputs: Vec<Vec<f64>>,
    /// Total loss sensitivity of forward states 0..=K.
    pub lambdas: Vec<PhaseState>,
}

/// Backpropagation through the recorded trajectory. Only force VJPs of the
/// Hamiltonian are used; `loss_grads.gamma` is ignored.
pub fn bptt_gradients<H: SeparableHamiltonian + ?Sized>(
    h: &H,
    traj: &Trajectory,
    loss_grads: &NudgeSequence,
    precision: Precision,
) -> Result<BpttGradients> {
    let (n, m, p) = (h.dim(), h.input_dim(), h.num_params());
    let k_total = traj.len();
    check_len("bptt loss gradients", k_total + 1, loss_grads.grads.len())?;
    let half = 0.5 * traj.step;
    let mut d_theta = vec![0.0; p];
    let mut d_inputs = vec![vec![0.0; m]; k_total];
    let mut lambdas = vec![PhaseState::zeros(n); k_total + 1];

    let mut lam = PhaseState::from_flat(loss_grads.grads[k_total].clone())?;
    check_len("bptt loss gradient", 2 * n, lam.as_slice().len())?;
    let mut w = vec![0.0; n];
    for k in (0..k_total).rev() {
        lambdas[k + 1] = lam.clone();
        let rec = &traj.records[k];
        let u = &traj.inputs[k];
        let s_k = traj.state(k);
        {
            let (lphi, lpi) = lam.split_mut();
            for i in 0..n {
                w[i] = half * lphi[i];
            }
            h.kinetic_force_vjp(rec.s_twothird.pi(), &w, lpi, &mut d_theta)?;
            precision.round_slice(lpi);
            for i in 0..n {
                w[i] = -traj.step * lpi[i];
            }
            h.potential_force_vjp(rec.s_third.phi(), u, &w, lphi, &mut d_theta, &mut d_inputs[k])?;
            precision.round_slice(lphi);
            for i in 0..n {
                w[i] = half * lphi[i];
            }
            h.kinetic_force_vjp(s_k.pi(), &w, lpi, &mut d_theta)?;
        }
        let y = &loss_grads.grads[k];
        check_len("bptt loss gradient", 2 * n, y.len())?;
        for (l, yi) in lam.as_mut_slice().iter_mut().zip(y) {
            *l += yi;
        }
        precision.round_slice(lam.as_mut_slice());
        precision.round_slice(&mut d_inputs[k]);
    }
    lambdas[0] = lam;
    precision.round_slice(&mut d_theta);
    Ok(BpttGradients {
        d_theta,
        d_inputs,
        lambdas,
    })
}

/// Central differences (L(θ+he_i) − L(θ−he_i)) / 2h, evaluated in parallel.
pub fn finite_difference_oracle<F>(loss_fn: F, theta: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    (0..theta.len())
        .into_par_iter()
        .map(|i| {
            let mut t = theta.to_vec();
            t[i] = theta[i] + h;
            let fp = loss_fn(&t);
            t[i] = theta[i] - h;
            let fm = loss_fn(&t);
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub cosine: f64,
    pub norm_ratio: f64,
}

const ZERO_NORM: f64 = 1e-15;

/// Cosine similarity and norm ratio ‖a‖/‖b‖. Cosine is 1 when both norms are
/// below 1e-15 and 0 when exactly one is; the ratio is 1, or +∞ when only
/// `b` vanishes.
pub fn compare_gradients(a: &[f64], b: &[f64]) -> Comparison {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    let (na, nb) = (aa.sqrt(), bb.sqrt());
    match (na < ZERO_NORM, nb < ZERO_NORM) {
        (true, true) => Comparison {
            cosine: 1.0,
            norm_ratio: 1.0,
        },
        (true, false) => Comparison {
            cosine: 0.0,
            norm_ratio: 0.0,
        },
        (false, true) => Comparison {
            cosine: 0.0,
            norm_ratio: f64::INFINITY,
        },
        (false, false) => Comparison {
            cosine: (ab / (aa * bb).sqrt()).clamp(-1.0, 1.0),
            norm_ratio: (aa / bb).sqrt(),
        },
    }
}
