//! Nonlinear HRU with V = (α/2)‖φ‖² + Σᵢ (1/Aᵢ) log cosh(Aᵢφᵢ + (Bu)ᵢ + bᵢ).
//!
//! As for the linear block, the integrator runs with unit step on
//! Ĥ = Σᵢ σ(rᵢ)(½πᵢ² + vᵢ), where rᵢ is the raw step parameter.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::integrator::SeparableHamiltonian;
use crate::linalg::{logcosh, matvec, matvec_t_acc, sigmoid};

pub const A_FLOOR: f64 = 1e-6;

/// Parameters laid out flat as `[A (n), B (n×m), b (n), α (1), raw δ (n)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearHru {
    n: usize,
    m: usize,
    params: Vec<f64>,
}

/// Gradients of the unscaled potential V.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearPotentialGrads {
    pub d_a: Vec<f64>,
    pub d_b: Vec<f64>,
    pub d_bias: Vec<f64>,
    pub d_alpha: f64,
    pub d_u: Vec<f64>,
}

impl NonlinearHru {
    pub fn new(
        a: &[f64],
        b: &[f64],
        bias: &[f64],
        alpha: f64,
        raw_delta: &[f64],
        input_dim: usize,
    ) -> Result<Self> {
        let n = a.len();
        check_len("nonlinear HRU B", n * input_dim, b.len())?;
        check_len("nonlinear HRU bias", n, bias.len())?;
        check_len("nonlinear HRU delta", n, raw_delta.len())?;
        if a.iter().any(|x| !(x.abs() >= A_FLOOR)) {
            return Err(Error::InvalidParameter(
                "nonlinear HRU A must be bounded away from zero".into(),
            ));
        }
        if !(alpha >= 0.0) {
            return Err(Error::InvalidParameter("alpha must be non-negative".into()));
        }
        let mut params = Vec::with_capacity(3 * n + n * input_dim + 1);
        params.extend_from_slice(a);
        params.extend_from_slice(b);
        params.extend_from_slice(bias);
        params.push(alpha);
        params.extend_from_slice(raw_delta);
        Ok(Self { n, m: input_dim, params })
    }

    pub fn from_flat(n: usize, m: usize, params: Vec<f64>) -> Result<Self> {
        check_len("nonlinear HRU parameters", 3 * n + n * m + 1, params.len())?;
        let h = Self { n, m, params };
        Self::new(h.a(), h.b(), h.bias(), h.alpha(), h.raw_delta(), m)
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
        &self.params[self.b_range()]
    }

    pub fn bias(&self) -> &[f64] {
        &self.params[self.bias_range()]
    }

    pub fn alpha(&self) -> f64 {
        self.params[self.alpha_index()]
    }

    pub fn raw_delta(&self) -> &[f64] {
        &self.params[self.delta_range()]
    }

    pub fn a_range(&self) -> std::ops::Range<usize> {
        0..self.n
    }

    pub fn b_range(&self) -> std::ops::Range<usize> {
        self.n..self.n + self.n * self.m
    }

    pub fn bias_range(&self) -> std::ops::Range<usize> {
        let s = self.n + self.n * self.m;
        s..s + self.n
    }

    pub fn alpha_index(&self) -> usize {
        2 * self.n + self.n * self.m
    }

    pub fn delta_range(&self) -> std::ops::Range<usize> {
        let s = self.alpha_index() + 1;
        s..s + self.n
    }

    /// Keeps |A| ≥ floor (sign preserved) and α ≥ 0 after an update.
    pub fn project(&mut self, floor: f64) {
        for x in &mut self.params[..self.n] {
            if x.abs() < floor {
                *x = if *x < 0.0 { -floor } else { floor };
            }
        }
        let ia = self.alpha_index();
        self.params[ia] = self.params[ia].max(0.0);
    }

    pub fn effective_delta(&self) -> Vec<f64> {
        self.raw_delta().iter().map(|&r| sigmoid(r)).collect()
    }

    fn preactivation(&self, phi: &[f64], u: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.n];
        matvec(self.b(), self.n, self.m, u, &mut z);
        let (a, bias) = (self.a(), self.bias());
        for i in 0..self.n {
            z[i] += a[i] * phi[i] + bias[i];
        }
        z
    }
}

/// Unscaled potential V(φ, u).
pub fn nonlinear_potential(phi: &[f64], hru: &NonlinearHru, u: &[f64]) -> Result<f64> {
    check_len("nonlinear potential state", hru.n, phi.len())?;
    check_len("nonlinear potential input", hru.m, u.len())?;
    let z = hru.preactivation(phi, u);
    let (a, alpha) = (hru.a(), hru.alpha());
    Ok((0..hru.n)
        .map(|i| 0.5 * alpha * phi[i] * phi[i] + logcosh(z[i]) / a[i])
        .sum())
}

/// ∇_φ V = tanh(z) + αφ.
pub fn nonlinear_force(phi: &[f64], hru: &NonlinearHru, u: &[f64]) -> Vec<f64> {
    let z = hru.preactivation(phi, u);
    let alpha = hru.alpha();
    (0..hru.n).map(|i| z[i].tanh() + alpha * phi[i]).collect()
}

/// Gradients of the unscaled potential with respect to A, B, b, α and u.
pub fn nonlinear_param_grads(
    phi: &[f64],
    hru: &NonlinearHru,
    u: &[f64],
) -> Result<NonlinearPotentialGrads> {
    check_len("nonlinear grads state", hru.n, phi.len())?;
    check_len("nonlinear grads input", hru.m, u.len())?;
    let (n, m) = (hru.n, hru.m);
    let z = hru.preactivation(phi, u);
    let a = hru.a();
    let mut g = NonlinearPotentialGrads {
        d_a: vec![0.0; n],
        d_b: vec![0.0; n * m],
        d_bias: vec![0.0; n],
        d_alpha: 0.0,
        d_u: vec![0.0; m],
    };
    let mut t = vec![0.0; n];
    for i in 0..n {
        t[i] = z[i].tanh() / a[i];
        g.d_a[i] = -logcosh(z[i]) / (a[i] * a[i]) + t[i] * phi[i];
        g.d_bias[i] = t[i];
        for j in 0..m {
            g.d_b[i * m + j] = t[i] * u[j];
        }
        g.d_alpha += 0.5 * phi[i] * phi[i];
    }
    matvec_t_acc(hru.b(), n, m, &t, 1.0, &mut g.d_u);
    Ok(g)
}

impl SeparableHamiltonian for NonlinearHru {
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
        self.raw_delta()
            .iter()
            .zip(pi)
            .map(|(&r, p)| 0.5 * sigmoid(r) * p * p)
            .sum()
    }

    fn potential(&self, phi: &[f64], u: &[f64]) -> f64 {
        let z = self.preactivation(phi, u);
        let (a, alpha, r) = (self.a(), self.alpha(), self.raw_delta());
        (0..self.n)
            .map(|i| sigmoid(r[i]) * (0.5 * alpha * phi[i] * phi[i] + logcosh(z[i]) / a[i]))
            .sum()
    }

    fn grad_kinetic(&self, pi: &[f64], out: &mut [f64]) {
        for ((o, &r), p) in out.iter_mut().zip(self.raw_delta()).zip(pi) {
            *o = sigmoid(r) * p;
        }
    }

    fn grad_potential(&self, phi: &[f64], u: &[f64], out: &mut [f64]) {
        let z = self.preactivation(phi, u);
        let (alpha, r) = (self.alpha(), self.raw_delta());
        for i in 0..self.n {
            out[i] = sigmoid(r[i]) * (z[i].tanh() + alpha * phi[i]);
        }
    }

    fn kinetic_param_grad(&self, pi: &[f64], scale: f64, out: &mut [f64]) {
        let od = self.delta_range().start;
        for (i, &r) in self.raw_delta().iter().enumerate() {
            let s = sigmoid(r);
            out[od + i] += scale * s * (1.0 - s) * 0.5 * pi[i] * pi[i];
        }
    }

    fn potential_param_grad(&self, phi: &[f64], u: &[f64], scale: f64, out: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        let z = self.preactivation(phi, u);
        let (a, alpha, r) = (self.a(), self.alpha(), self.raw_delta());
        let (ob, obias, ia, od) = (
            self.b_range().start,
            self.bias_range().start,
            self.alpha_index(),
            self.delta_range().start,
        );
        for i in 0..n {
            let s = sigmoid(r[i]);
            let lc = logcosh(z[i]);
            let t = z[i].tanh() / a[i];
            let c = scale * s;
            out[i] += c * (-lc / (a[i] * a[i]) + t * phi[i]);
            if t != 0.0 {
                let row = &mut out[ob + i * m..ob + (i + 1) * m];
                for j in 0..m {
                    row[j] += c * t * u[j];
                }
            }
            out[obias + i] += c * t;
            out[ia] += c * 0.5 * phi[i] * phi[i];
            out[od + i] += scale * s * (1.0 - s) * (0.5 * alpha * phi[i] * phi[i] + lc / a[i]);
        }
    }

    fn potential_input_grad(&self, phi: &[f64], u: &[f64], scale: f64, out: &mut [f64]) {
        let z = self.preactivation(phi, u);
        let (a, r) = (self.a(), self.raw_delta());
        let w: Vec<f64> = (0..self.n)
            .map(|i| sigmoid(r[i]) * z[i].tanh() / a[i])
            .collect();
        matvec_t_acc(self.b(), self.n, self.m, &w, scale, out);
    }

    fn kinetic_force_vjp(
        &self,
        pi: &[f64],
        w: &[f64],
        d_pi: &mut [f64],
        d_theta: &mut [f64],
    ) -> Result<()> {
        let od = self.delta_range().start;
        for (i, &r) in self.raw_delta().iter().enumerate() {
            let s = sigmoid(r);
            d_pi[i] += w[i] * s;
            d_theta[od + i] += w[i] * s * (1.0 - s) * pi[i];
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
        let z = self.preactivation(phi, u);
        let (a, alpha, r) = (self.a(), self.alpha(), self.raw_delta());
        let (ob, obias, ia, od) = (
            self.b_range().start,
            self.bias_range().start,
            self.alpha_index(),
            self.delta_range().start,
        );
        let mut wz = vec![0.0; n];
        for i in 0..n {
            let s = sigmoid(r[i]);
            let th = z[i].tanh();
            let sech2 = 1.0 - th * th;
            let ws = w[i] * s;
            wz[i] = ws * sech2;
            d_phi[i] += ws * alpha + wz[i] * a[i];
            d_theta[i] += wz[i] * phi[i];
            if wz[i] != 0.0 {
                let row = &mut d_theta[ob + i * m..ob + (i + 1) * m];
                for j in 0..m {
                    row[j] += wz[i] * u[j];
                }
            }
            d_theta[obias + i] += wz[i];
            d_theta[ia] += ws * phi[i];
            d_theta[od + i] += w[i] * s * (1.0 - s) * (th + alpha * phi[i]);
        }
        matvec_t_acc(self.b(), n, m, &wz, 1.0, d_u);
        Ok(())
    }
}

/// Randomized finite-difference self-test of every analytic capability.
pub fn certify(seed: u64, trials: usize) -> Result<()> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let n = rng.gen_range(1..5);
        let m = rng.gen_range(1..4);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.0)).collect();
        let b: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bias: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let alpha = rng.gen_range(0.1..1.0);
        let rd: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = NonlinearHru::new(&a, &b, &bias, alpha, &rd, m)?;
        let phi: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let u: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.5..1.5)).collect();
        certify_potential(&h, &phi, &u)?;
        crate::certify::certify_hamiltonian(&h, &mut rng, 1e-6)?;
    }
    Ok(())
}

fn certify_potential(h: &NonlinearHru, phi: &[f64], u: &[f64]) -> Result<()> {
    use crate::certify::{check_close, fd_gradient};
    let g = nonlinear_param_grads(phi, h, u)?;
    let (n, m) = (h.n, h.m);
    let eval = |params: &[f64], u: &[f64]| -> f64 {
        let hh = NonlinearHru { n, m, params: params.to_vec() };
        nonlinear_potential(phi, &hh, u).unwrap_or(f64::NAN)
    };
    let p = h.params.clone();
    let fd_theta = fd_gradient(&p, |q| eval(q, u));
    check_close("logcosh potential dV/dA", &g.d_a, &fd_theta[h.a_range()], 1e-6)?;
    check_close("logcosh potential dV/dB", &g.d_b, &fd_theta[h.b_range()], 1e-6)?;
    check_close("logcosh potential dV/db", &g.d_bias, &fd_theta[h.bias_range()], 1e-6)?;
    check_close(
        "logcosh potential dV/dalpha",
        &[g.d_alpha],
        &[fd_theta[h.alpha_index()]],
        1e-6,
    )?;
    let fd_u = fd_gradient(u, |q| eval(&p, q));
    check_close("logcosh potential dV/du", &g.d_u, &fd_u, 1e-6)?;
    let force = nonlinear_force(phi, h, u);
    let fd_phi = fd_gradient(phi, |q| nonlinear_potential(q, h, u).unwrap_or(f64::NAN));
    check_close("logcosh potential force", &force, &fd_phi, 1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, b: f64, bias: f64, alpha: f64) -> NonlinearHru {
        NonlinearHru::new(&[a], &[b], &[bias], alpha, &[0.0], 1).unwrap()
    }

    #[test]
    fn potential_examples() {
        let h = scalar(1.0, 0.5, 0.0, 0.3);
        assert_eq!(nonlinear_potential(&[0.0], &h, &[0.0]).unwrap(), 0.0);
        let h = scalar(1.0, 0.0, 0.0, 0.0);
        let v = nonlinear_potential(&[1.0], &h, &[0.0]).unwrap();
        assert!((v - 0.433781).abs() < 1e-6);
        assert!((v - 1f64.cosh().ln()).abs() < 1e-15);
        assert_eq!(nonlinear_force(&[0.0], &h, &[0.0]), vec![0.0]);
    }

    #[test]
    fn logcosh_large_argument_is_finite() {
        let h = scalar(1.0, 0.0, 0.0, 0.0);
        let v = nonlinear_potential(&[800.0], &h, &[0.0]).unwrap();
        assert!((v - (800.0 - std::f64::consts::LN_2)).abs() < 1e-9);
    }

    #[test]
    fn grads_vanish_at_zero_preactivation() {
        let h = scalar(0.8, 0.5, 0.0, 0.3);
        let g = nonlinear_param_grads(&[0.0], &h, &[0.0]).unwrap();
        assert_eq!(g.d_b, vec![0.0]);
        assert_eq!(g.d_bias, vec![0.0]);
        assert_eq!(g.d_u, vec![0.0]);
    }

    #[test]
    fn alpha_gradient_is_half_norm() {
        let h = scalar(0.8, 0.5, 0.1, 0.3);
        let g = nonlinear_param_grads(&[3.0], &h, &[0.2]).unwrap();
        assert_eq!(g.d_alpha, 4.5);
    }

    #[test]
    fn zero_a_rejected() {
        assert!(NonlinearHru::new(&[0.0], &[0.0], &[0.0], 0.1, &[0.0], 1).is_err());
        assert!(NonlinearHru::new(&[1.0], &[0.0], &[0.0], -0.1, &[0.0], 1).is_err());
    }

    #[test]
    fn certification_passes() {
        certify(11, 100).unwrap();
    }
}
