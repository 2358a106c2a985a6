//! Per-block spatial glue: readout x = Cφ + D⊙u, GELU, residual and GLU.

use serde::{Deserialize, Serialize};

use crate::certify::{check_close, fd_gradient};
use crate::error::Result;
use crate::linalg::{matvec, matvec_t_acc, outer_acc, sigmoid};
use crate::precision::Precision;

const GELU_C: f64 = 0.797_884_560_802_865_4; // √(2/π)
const GELU_K: f64 = 0.044_715;

/// Tanh approximation 0.5x(1 + tanh(√(2/π)(x + 0.044715x³))).
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

/// C is hidden×state, D is a hidden-length diagonal, W1 and W2 are
/// hidden×hidden with no bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialBlock {
    pub hidden: usize,
    pub state: usize,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
}

/// Activations of one step kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialStep {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrads {
    pub d_c: Vec<f64>,
    pub d_d: Vec<f64>,
    pub d_w1: Vec<f64>,
    pub d_w2: Vec<f64>,
    /// Direct gradient on the block input through D and the residual.
    pub d_input: Vec<Vec<f64>>,
    /// Gradient on φ at each step.
    pub d_phi: Vec<Vec<f64>>,
}

/// GLU(z) = sigmoid(W1 z) ⊙ (W2 z).
pub fn glu(w1: &[f64], w2: &[f64], z: &[f64]) -> Vec<f64> {
    let h = z.len();
    let (mut a1, mut a2) = (vec![0.0; h], vec![0.0; h]);
    matvec(w1, h, h, z, &mut a1);
    matvec(w2, h, h, z, &mut a2);
    (0..h).map(|i| sigmoid(a1[i]) * a2[i]).collect()
}

impl SpatialBlock {
    pub fn zeros(hidden: usize, state: usize) -> Self {
        Self {
            hidden,
            state,
            c: vec![0.0; hidden * state],
            d: vec![0.0; hidden],
            w1: vec![0.0; hidden * hidden],
            w2: vec![0.0; hidden * hidden],
        }
    }

    pub fn forward_step(&self, u: &[f64], phi: &[f64], prec: Precision) -> (Vec<f64>, SpatialStep) {
        let h = self.hidden;
        let mut x = vec![0.0; h];
        matvec(&self.c, h, self.state, phi, &mut x);
        for i in 0..h {
            x[i] += self.d[i] * u[i];
        }
        prec.round_slice(&mut x);
        let mut z: Vec<f64> = (0..h).map(|i| gelu(x[i]) + u[i]).collect();
        prec.round_slice(&mut z);
        let (mut a1, mut a2) = (vec![0.0; h], vec![0.0; h]);
        matvec(&self.w1, h, h, &z, &mut a1);
        matvec(&self.w2, h, h, &z, &mut a2);
        prec.round_slice(&mut a1);
        prec.round_slice(&mut a2);
        let mut out: Vec<f64> = (0..h).map(|i| sigmoid(a1[i]) * a2[i]).collect();
        prec.round_slice(&mut out);
        (out, SpatialStep { x, z, a1, a2 })
    }

    /// Reverse pass over all steps given upstream gradients on the outputs.
    pub fn vjp(
        &self,
        inputs: &[Vec<f64>],
        phis: &[&[f64]],
        steps: &[SpatialStep],
        upstream: &[Vec<f64>],
        prec: Precision,
    ) -> SpatialGrads {
        let (h, s) = (self.hidden, self.state);
        let mut g = SpatialGrads {
            d_c: vec![0.0; h * s],
            d_d: vec![0.0; h],
            d_w1: vec![0.0; h * h],
            d_w2: vec![0.0; h * h],
            d_input: Vec::with_capacity(inputs.len()),
            d_phi: Vec::with_capacity(inputs.len()),
        };
        let (mut da1, mut da2) = (vec![0.0; h], vec![0.0; h]);
        for (k, st) in steps.iter().enumerate() {
            let gk = &upstream[k];
            for i in 0..h {
                let sg = sigmoid(st.a1[i]);
                da1[i] = gk[i] * st.a2[i] * sg * (1.0 - sg);
                da2[i] = gk[i] * sg;
            }
            outer_acc(&mut g.d_w1, &da1, &st.z, 1.0);
            outer_acc(&mut g.d_w2, &da2, &st.z, 1.0);
            let mut dz = vec![0.0; h];
            matvec_t_acc(&self.w1, h, h, &da1, 1.0, &mut dz);
            matvec_t_acc(&self.w2, h, h, &da2, 1.0, &mut dz);
            prec.round_slice(&mut dz);
            let mut dx: Vec<f64> = (0..h).map(|i| dz[i] * gelu_grad(st.x[i])).collect();
            prec.round_slice(&mut dx);
            outer_acc(&mut g.d_c, &dx, phis[k], 1.0);
            let mut du = dz;
            for i in 0..h {
                g.d_d[i] += dx[i] * inputs[k][i];
                du[i] += self.d[i] * dx[i];
            }
            prec.round_slice(&mut du);
            let mut dphi = vec![0.0; s];
            matvec_t_acc(&self.c, h, s, &dx, 1.0, &mut dphi);
            prec.round_slice(&mut dphi);
            g.d_input.push(du);
            g.d_phi.push(dphi);
        }
        for v in [&mut g.d_c, &mut g.d_d, &mut g.d_w1, &mut g.d_w2] {
            prec.round_slice(v);
        }
        g
    }
}

/// Randomized finite-difference check of GELU, GLU and the block VJP.
pub fn certify(seed: u64, trials: usize) -> Result<()> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let x: f64 = rng.gen_range(-4.0..4.0);
        let fd = fd_gradient(&[x], |q| gelu(q[0]));
        check_close("gelu derivative", &[gelu_grad(x)], &fd, 1e-6)?;

        let h = rng.gen_range(1..5);
        let s = rng.gen_range(1..5);
        let k_total = rng.gen_range(1..4);
        let mut r = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        let blk = SpatialBlock {
            hidden: h,
            state: s,
            c: r(h * s),
            d: r(h),
            w1: r(h * h),
            w2: r(h * h),
        };
        let inputs: Vec<Vec<f64>> = (0..k_total).map(|_| r(h)).collect();
        let phis: Vec<Vec<f64>> = (0..k_total).map(|_| r(s)).collect();
        let weights: Vec<Vec<f64>> = (0..k_total).map(|_| r(h)).collect();

        let objective = |b: &SpatialBlock, ins: &[Vec<f64>], ph: &[Vec<f64>]| -> f64 {
            let mut acc = 0.0;
            for k in 0..k_total {
                let (out, _) = b.forward_step(&ins[k], &ph[k], Precision::F64);
                acc += crate::linalg::dot(&out, &weights[k]);
            }
            acc
        };
        let steps: Vec<SpatialStep> = (0..k_total)
            .map(|k| blk.forward_step(&inputs[k], &phis[k], Precision::F64).1)
            .collect();
        let phi_refs: Vec<&[f64]> = phis.iter().map(|p| p.as_slice()).collect();
        let g = blk.vjp(&inputs, &phi_refs, &steps, &weights, Precision::F64);

        let flat: Vec<f64> = [&blk.c[..], &blk.d, &blk.w1, &blk.w2].concat();
        let rebuild = |q: &[f64]| {
            let mut b = blk.clone();
            let (c, rest) = q.split_at(h * s);
            let (d, rest) = rest.split_at(h);
            let (w1, w2) = rest.split_at(h * h);
            b.c = c.to_vec();
            b.d = d.to_vec();
            b.w1 = w1.to_vec();
            b.w2 = w2.to_vec();
            b
        };
        let fd = fd_gradient(&flat, |q| objective(&rebuild(q), &inputs, &phis));
        let analytic: Vec<f64> = [&g.d_c[..], &g.d_d, &g.d_w1, &g.d_w2].concat();
        check_close("spatial vjp parameters", &analytic, &fd, 1e-6)?;

        let flat_in: Vec<f64> = inputs.concat();
        let fd = fd_gradient(&flat_in, |q| {
            let ins: Vec<Vec<f64>> = q.chunks(h).map(|c| c.to_vec()).collect();
            objective(&blk, &ins, &phis)
        });
        check_close("spatial vjp input", &g.d_input.concat(), &fd, 1e-6)?;

        let flat_phi: Vec<f64> = phis.concat();
        let fd = fd_gradient(&flat_phi, |q| {
            let ph: Vec<Vec<f64>> = q.chunks(s).map(|c| c.to_vec()).collect();
            objective(&blk, &inputs, &ph)
        });
        check_close("spatial vjp state", &g.d_phi.concat(), &fd, 1e-6)?;

        let z = r(h);
        let out = glu(&blk.w1, &blk.w2, &z);
        let wsum = |q: &[f64]| crate::linalg::dot(&glu(&blk.w1, &blk.w2, q), &weights[0]);
        let fd = fd_gradient(&z, wsum);
        let (mut a1, mut a2) = (vec![0.0; h], vec![0.0; h]);
        matvec(&blk.w1, h, h, &z, &mut a1);
        matvec(&blk.w2, h, h, &z, &mut a2);
        let mut dz = vec![0.0; h];
        let (mut da1, mut da2) = (vec![0.0; h], vec![0.0; h]);
        for i in 0..h {
            let sg = sigmoid(a1[i]);
            da1[i] = weights[0][i] * a2[i] * sg * (1.0 - sg);
            da2[i] = weights[0][i] * sg;
        }
        matvec_t_acc(&blk.w1, h, h, &da1, 1.0, &mut dz);
        matvec_t_acc(&blk.w2, h, h, &da2, 1.0, &mut dz);
        check_close("glu input gradient", &dz, &fd, 1e-6)?;
        debug_assert_eq!(out.len(), h);
    }
    Ok(())
}
