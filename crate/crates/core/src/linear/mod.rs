//! Linear HRU: H = ½‖π‖² + ½φᵀAφ − φᵀBu with diagonal A and per-dimension δ.
//!
//! The integrator runs with unit step on Ĥ = Σᵢ δᵢ hᵢ, which reproduces the
//! δ-step leapfrog and exposes δ as an ordinary parameter of Ĥ.

mod scan;

pub use scan::{parallel_scan_rollout, scan_elements, ScanDirection, ScanElement};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::integrator::SeparableHamiltonian;
use crate::phase::PhaseState;
use crate::rhel::EchoPair;

/// Parameters laid out flat as `[A (n), B (n×m row-major), δ (n)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHru {
    n: usize,
    m: usize,
    params: Vec<f64>,
}

impl LinearHru {
    pub fn new(a: &[f64], b: &[f64], delta: &[f64], input_dim: usize) -> Result<Self> {
        let n = a.len();
        check_len("linear HRU B", n * input_dim, b.len())?;
        check_len("linear HRU delta", n, delta.len())?;
        if a.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidParameter("linear HRU A must be positive".into()));
        }
        if delta.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidParameter("linear HRU delta must be positive".into()));
        }
        let mut params = Vec::with_capacity(2 * n + n * input_dim);
        params.extend_from_slice(a);
        params.extend_from_slice(b);
        params.extend_from_slice(delta);
        Ok(Self { n, m: input_dim, params })
    }

    pub fn from_flat(n: usize, m: usize, params: Vec<f64>) -> Result<Self> {
        check_len("linear HRU parameters", 2 * n + n * m, params.len())?;
        let a = params[..n].to_vec();
        let b = params[n..n + n * m].to_vec();
        let d = params[n + n * m..].to_vec();
        Self::new(&a, &b, &d, m)
    }

    pub fn dim_n(&self) -> usize {
        self.n
    }

    pub fn dim_m(&self) -> usize {
        self.m
    }

    pub fn a(&self) -> &[f64] {
        &self.params[..self.n]
    }

    pub fn b(&self) -> &[f64] {
        &self.params[self.n..self.n + self.n * self.m]
    }

    pub fn delta(&self) -> &[f64] {
        &self.params[self.n + self.n * self.m..]
    }

    pub fn a_range(&self) -> std::ops::Range<usize> {
        0..self.n
    }

    pub fn b_range(&self) -> std::ops::Range<usize> {
        self.n..self.n + self.n * self.m
    }

    pub fn delta_range(&self) -> std::ops::Range<usize> {
        self.n + self.n * self.m..self.params.len()
    }

    /// Clamps A and δ at `floor` after an optimizer update.
    pub fn project(&mut self, floor: f64) {
        let (ra, rd) = (self.a_range(), self.delta_range());
        for x in &mut self.params[ra] {
            *x = x.max(floor);
        }
        for x in &mut self.params[rd] {
            *x = x.max(floor);
        }
    }

    /// out = B u.
    pub fn drive(&self, u: &[f64], out: &mut [f64]) {
        crate::linalg::matvec(self.b(), self.n, self.m, u, out);
    }
}

/// Unscaled Hamiltonian ½‖π‖² + ½φᵀAφ − φᵀBu.
pub fn linear_hamiltonian(s: &PhaseState, hru: &LinearHru, u: &[f64]) -> Result<f64> {
    check_len("linear hamiltonian state", hru.n, s.dim())?;
    check_len("linear hamiltonian input", hru.m, u.len())?;
    let mut bu = vec![0.0; hru.n];
    hru.drive(u, &mut bu);
    let a = hru.a();
    let mut h = 0.0;
    for i in 0..hru.n {
        let (phi, pi) = (s.phi()[i], s.pi()[i]);
        h += 0.5 * pi * pi + 0.5 * a[i] * phi * phi - phi * bu[i];
    }
    Ok(h)
}

impl SeparableHamiltonian for LinearHru {
    fn dim(&self) -> usize {
        self.n
    }

    fn input_dim(&self) -> usize {
        self.m
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn kinetic(&self, pi: &[f64]) -> f64 {
        self.delta().iter().zip(pi).map(|(d, p)| 0.5 * d * p * p).sum()
    }

    fn potential(&self, phi: &[f64], u: &[f64]) -> f64 {
        let mut bu = vec![0.0; self.n];
        self.drive(u, &mut bu);
        let (a, d) = (self.a(), self.delta());
        (0..self.n)
            .map(|i| d[i] * (0.5 * a[i] * phi[i] * phi[i] - phi[i] * bu[i]))
            .sum()
    }

    fn grad_kinetic(&self, pi: &[f64], out: &mut [f64]) {
        for ((o, d), p) in out.iter_mut().zip(self.delta()).zip(pi) {
            *o = d * p;
        }
    }

    fn grad_potential(&self, phi: &[f64], u: &[f64], out: &mut [f64]) {
        self.drive(u, out);
        let (a, d) = (self.a(), self.delta());
        for i in 0..self.n {
            out[i] = d[i] * (a[i] * phi[i] - out[i]);
        }
    }

    fn kinetic_param_grad(&self, pi: &[f64], scale: f64, out: &mut [f64]) {
        let off = self.delta_range().start;
        for i in 0..self.n {
            out[off + i] += scale * 0.5 * pi[i] * pi[i];
        }
    }

    fn potential_param_grad(&self, phi: &[f64], u: &[f64], scale: f64, out: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        let mut bu = vec![0.0; n];
        self.drive(u, &mut bu);
        let (a, d) = (self.a(), self.delta());
        let (ob, od) = (self.b_range().start, self.delta_range().start);
        for i in 0..n {
            out[i] += scale * 0.5 * d[i] * phi[i] * phi[i];
            let c = -scale * d[i] * phi[i];
            if c != 0.0 {
                let row = &mut out[ob + i * m..ob + (i + 1) * m];
                for j in 0..m {
                    row[j] += c * u[j];
                }
            }
            out[od + i] += scale * (0.5 * a[i] * phi[i] * phi[i] - phi[i] * bu[i]);
        }
    }

    fn potential_input_grad(&self, phi: &[f64], _u: &[f64], scale: f64, out: &mut [f64]) {
        let d = self.delta();
        let w: Vec<f64> = (0..self.n).map(|i| d[i] * phi[i]).collect();
        crate::linalg::matvec_t_acc(self.b(), self.n, self.m, &w, -scale, out);
    }

    fn kinetic_force_vjp(
        &self,
        pi: &[f64],
        w: &[f64],
        d_pi: &mut [f64],
        d_theta: &mut [f64],
    ) -> Result<()> {
        let d = self.delta();
        let od = self.delta_range().start;
        for i in 0..self.n {
            d_pi[i] += w[i] * d[i];
            d_theta[od + i] += w[i] * pi[i];
        }
        Ok(())
    }

    fn potential_force_vjp(
        &self,
        phi: &[f64],
        u: &[f64],
        w: &[f64],
        d_phi: &mut [f64],
        d_theta: &mut [f64],
        d_u: &mut [f64],
    ) -> Result<()> {
        let (n, m) = (self.n, self.m);
        let mut bu = vec![0.0; n];
        self.drive(u, &mut bu);
        let (a, d) = (self.a(), self.delta());
        let (ob, od) = (self.b_range().start, self.delta_range().start);
        let mut wd = vec![0.0; n];
        for i in 0..n {
            wd[i] = w[i] * d[i];
            d_phi[i] += wd[i] * a[i];
            d_theta[i] += wd[i] * phi[i];
            if wd[i] != 0.0 {
                let row = &mut d_theta[ob + i * m..ob + (i + 1) * m];
                for j in 0..m {
                    row[j] -= wd[i] * u[j];
                }
            }
            d_theta[od + i] += w[i] * (a[i] * phi[i] - bu[i]);
        }
        crate::linalg::matvec_t_acc(self.b(), n, m, &wd, -1.0, d_u);
        Ok(())
    }
}

/// Closed-form linear-HRU estimators, γ-corrected.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRhelGrads {
    pub d_a: Vec<f64>,
    pub d_b: Vec<f64>,
    pub d_delta: Vec<f64>,
    /// Input gradients in forward time order.
    pub d_u: Vec<Vec<f64>>,
}

/// Specialized estimators evaluated at the k+1/3 echo states, where the
/// φ-dependent terms of the averaged gradient coincide.
pub fn linear_rhel_grads(
    pair: &EchoPair,
    hru: &LinearHru,
    reversed_inputs: &[Vec<f64>],
) -> Result<LinearRhelGrads> {
    if pair.epsilon == 0.0 {
        return Err(Error::EpsilonZero);
    }
    let (n, m) = (hru.n, hru.m);
    let k_total = pair.plus.len();
    check_len("echo pair length", k_total, pair.minus.len())?;
    check_len("reversed inputs", k_total, reversed_inputs.len())?;
    let c = 1.0 / (2.0 * pair.epsilon * pair.gamma);
    let (a, b, d) = (hru.a(), hru.b(), hru.delta());
    let mut d_a = vec![0.0; n];
    let mut d_b = vec![0.0; n * m];
    let mut d_delta = vec![0.0; n];
    let mut d_u = vec![vec![0.0; m]; k_total];
    let mut bu = vec![0.0; n];
    let mut w = vec![0.0; n];
    for k in 0..k_total {
        let (rp, rm) = (&pair.plus.records[k], &pair.minus.records[k]);
        let u = &reversed_inputs[k];
        hru.drive(u, &mut bu);
        let (fp, fm) = (rp.s_third.phi(), rm.s_third.phi());
        let (p1p, p1m) = (rp.s_third.pi(), rm.s_third.pi());
        let (p2p, p2m) = (rp.s_twothird.pi(), rm.s_twothird.pi());
        for i in 0..n {
            let dphi = fp[i] - fm[i];
            let dsq = fp[i] * fp[i] - fm[i] * fm[i];
            d_a[i] -= c * 0.5 * d[i] * dsq;
            w[i] = c * d[i] * dphi;
            let row = &mut d_b[i * m..(i + 1) * m];
            for j in 0..m {
                row[j] += w[i] * u[j];
            }
            let dpsq = 0.5 * (p1p[i] * p1p[i] + p2p[i] * p2p[i])
                - 0.5 * (p1m[i] * p1m[i] + p2m[i] * p2m[i]);
            d_delta[i] -= c * (0.5 * dpsq + 0.5 * a[i] * dsq - dphi * bu[i]);
        }
        crate::linalg::matvec_t_acc(b, n, m, &w, 1.0, &mut d_u[k_total - 1 - k]);
    }
    Ok(LinearRhelGrads {
        d_a,
        d_b,
        d_delta,
        d_u,
    })
}

/// Randomized finite-difference self-test of every analytic capability.
pub fn certify(seed: u64, trials: usize) -> Result<()> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let n = rng.gen_range(1..5);
        let m = rng.gen_range(1..4);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let b: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let d: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let h = LinearHru::new(&a, &b, &d, m)?;
        crate::certify::certify_hamiltonian(&h, &mut rng, 1e-6)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{leapfrog_step, reverse_check, rollout};
    use crate::precision::Precision;

    fn scalar(a: f64, b: f64, d: f64) -> LinearHru {
        LinearHru::new(&[a], &[b], &[d], 1).unwrap()
    }

    #[test]
    fn hamiltonian_examples() {
        let s = PhaseState::new(&[1.0], &[0.0]).unwrap();
        assert_eq!(linear_hamiltonian(&s, &scalar(2.0, 0.0, 0.1), &[0.0]).unwrap(), 1.0);
        let s = PhaseState::new(&[0.0], &[3.0]).unwrap();
        assert_eq!(linear_hamiltonian(&s, &scalar(2.0, 0.0, 0.1), &[0.0]).unwrap(), 4.5);
        let s = PhaseState::new(&[1.0], &[1.0]).unwrap();
        assert_eq!(linear_hamiltonian(&s, &scalar(1.0, 2.0, 0.1), &[1.0]).unwrap(), -1.0);
    }

    #[test]
    fn leapfrog_hand_trace() {
        let h = scalar(1.0, 0.0, 0.1);
        let s = PhaseState::new(&[1.0], &[0.0]).unwrap();
        let r = leapfrog_step(&h, &s, &[0.0], 1.0, Precision::F64).unwrap();
        assert_eq!(r.s_third.as_slice(), &[1.0, 0.0]);
        assert!((r.s_twothird.pi()[0] + 0.1).abs() < 1e-15);
        assert!((r.s_next.phi()[0] - 0.995).abs() < 1e-15);
        assert!((r.s_next.pi()[0] + 0.1).abs() < 1e-15);

        let r2 = leapfrog_step(&h, &r.s_next, &[0.0], 1.0, Precision::F64).unwrap();
        // by hand: φ⅓ = 0.995 − 0.005 = 0.99, π = −0.1 − 0.1·0.99 = −0.199, φ = 0.99 − 0.00995
        assert!((r2.s_next.phi()[0] - 0.98005).abs() < 1e-14);
        assert!((r2.s_next.pi()[0] + 0.199).abs() < 1e-14);
    }

    #[test]
    fn one_step_reversal_by_hand() {
        let h = scalar(1.0, 0.0, 0.1);
        let s = PhaseState::new(&[0.995], &[0.1]).unwrap();
        let r = leapfrog_step(&h, &s, &[0.0], 1.0, Precision::F64).unwrap();
        assert!((r.s_next.phi()[0] - 1.0).abs() < 1e-15);
        assert!(r.s_next.pi()[0].abs() < 1e-15);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(LinearHru::new(&[0.0], &[0.0], &[0.1], 1).is_err());
        assert!(LinearHru::new(&[1.0], &[0.0], &[-0.1], 1).is_err());
        assert!(LinearHru::new(&[1.0], &[0.0, 1.0], &[0.1], 1).is_err());
    }

    #[test]
    fn certification_passes() {
        certify(2, 100).unwrap();
    }

    #[test]
    fn reversibility_random_long() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 4;
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let b: Vec<f64> = (0..n * 2).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let d: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.5)).collect();
        let h = LinearHru::new(&a, &b, &d, 2).unwrap();
        let inputs: Vec<Vec<f64>> = (0..1000)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let x0 = PhaseState::new(&[0.1, 0.2, -0.3, 0.4], &[0.0, 0.5, 0.1, -0.2]).unwrap();
        let t = rollout(&h, &x0, &inputs, 1.0, Precision::F64).unwrap();
        assert!(reverse_check(&h, &t).unwrap() <= 1e-10);
    }
}
