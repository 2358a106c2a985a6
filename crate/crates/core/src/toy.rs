//! Six coupled harmonic oscillators driven on oscillator 1 and tracked on
//! oscillator 4, integrated with fine-step leapfrog for the continuous-time
//! echo versus adjoint comparison.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::integrator::{rollout, SeparableHamiltonian, Trajectory};
use crate::phase::PhaseState;
use crate::precision::Precision;

pub const N_OSC: usize = 6;
pub const N_PAIRS: usize = N_OSC * (N_OSC - 1) / 2;
pub const DRIVEN: usize = 0;
pub const TRACKED: usize = 3;

/// Pairs (i, j) with i < j in lexicographic order.
pub fn pairs() -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(N_PAIRS);
    for i in 0..N_OSC {
        for j in i + 1..N_OSC {
            v.push((i, j));
        }
    }
    v
}

/// H = Σ π²/2m + ½Σ kφ² + ½Σ_{i<j} k_ij(φ_j − φ_i)² − uφ¹ − c·½(φ⁴ − y)².
///
/// Parameters are laid out `[m (6), k (6), k_pair (15)]`. Inputs are `[u, y]`;
/// `nudge` is the coefficient c, zero on the forward pass and ±ε·scale on the
/// echoes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyHamiltonian {
    params: Vec<f64>,
    pub nudge: f64,
}

pub const M_OFF: usize = 0;
pub const K_OFF: usize = N_OSC;
pub const KP_OFF: usize = 2 * N_OSC;
pub const N_TOY_PARAMS: usize = 2 * N_OSC + N_PAIRS;

impl ToyHamiltonian {
    pub fn new(m: &[f64], k: &[f64], k_pair: &[f64]) -> Result<Self> {
        check_len("toy masses", N_OSC, m.len())?;
        check_len("toy springs", N_OSC, k.len())?;
        check_len("toy couplings", N_PAIRS, k_pair.len())?;
        if m.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidParameter("masses must be positive".into()));
        }
        if k.iter().chain(k_pair).any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidParameter("springs must be non-negative".into()));
        }
        Ok(Self {
            params: [m, k, k_pair].concat(),
            nudge: 0.0,
        })
    }

    pub fn random(rng: &mut impl rand::Rng) -> Self {
        let m: Vec<f64> = (0..N_OSC).map(|_| rng.gen_range(0.5..1.5)).collect();
        let k: Vec<f64> = (0..N_OSC).map(|_| rng.gen_range(0.5..1.5)).collect();
        let kp: Vec<f64> = (0..N_PAIRS).map(|_| rng.gen_range(0.0..0.5)).collect();
        Self::new(&m, &k, &kp).expect("valid random toy parameters")
    }

    pub fn m(&self) -> &[f64] {
        &self.params[M_OFF..K_OFF]
    }

    pub fn k(&self) -> &[f64] {
        &self.params[K_OFF..KP_OFF]
    }

    pub fn k_pair(&self) -> &[f64] {
        &self.params[KP_OFF..]
    }

    pub fn with_nudge(&self, nudge: f64) -> Self {
        Self {
            params: self.params.clone(),
            nudge,
        }
    }
}

impl SeparableHamiltonian for ToyHamiltonian {
    fn dim(&self) -> usize {
        N_OSC
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn kinetic(&self, pi: &[f64]) -> f64 {
        self.m().iter().zip(pi).map(|(m, p)| p * p / (2.0 * m)).sum()
    }

    fn potential(&self, phi: &[f64], u: &[f64]) -> f64 {
        let mut v = 0.0;
        for (k, f) in self.k().iter().zip(phi) {
            v += 0.5 * k * f * f;
        }
        for ((i, j), kp) in pairs().into_iter().zip(self.k_pair()) {
            let d = phi[j] - phi[i];
            v += 0.5 * kp * d * d;
        }
        let e = phi[TRACKED] - u[1];
        v - u[0] * phi[DRIVEN] - self.nudge * 0.5 * e * e
    }

    fn grad_kinetic(&self, pi: &[f64], out: &mut [f64]) {
        for ((o, m), p) in out.iter_mut().zip(self.m()).zip(pi) {
            *o = p / m;
        }
    }

    fn grad_potential(&self, phi: &[f64], u: &[f64], out: &mut [f64]) {
        for i in 0..N_OSC {
            out[i] = self.k()[i] * phi[i];
        }
        for ((i, j), kp) in pairs().into_iter().zip(self.k_pair()) {
            let d = kp * (phi[j] - phi[i]);
            out[j] += d;
            out[i] -= d;
        }
        out[DRIVEN] -= u[0];
        out[TRACKED] -= self.nudge * (phi[TRACKED] - u[1]);
    }

    fn kinetic_param_grad(&self, pi: &[f64], scale: f64, out: &mut [f64]) {
        for (i, m) in self.m().iter().enumerate() {
            out[M_OFF + i] -= scale * pi[i] * pi[i] / (2.0 * m * m);
        }
    }

    fn potential_param_grad(&self, phi: &[f64], _u: &[f64], scale: f64, out: &mut [f64]) {
        for i in 0..N_OSC {
            out[K_OFF + i] += scale * 0.5 * phi[i] * phi[i];
        }
        for (p, (i, j)) in pairs().into_iter().enumerate() {
            let d = phi[j] - phi[i];
            out[KP_OFF + p] += scale * 0.5 * d * d;
        }
    }

    fn potential_input_grad(&self, phi: &[f64], u: &[f64], scale: f64, out: &mut [f64]) {
        out[0] -= scale * phi[DRIVEN];
        out[1] += scale * self.nudge * (phi[TRACKED] - u[1]);
    }

    fn kinetic_force_vjp(&self, pi: &[f64], w: &[f64], d_pi: &mut [f64], d_theta: &mut [f64]) -> Result<()> {
        for (i, m) in self.m().iter().enumerate() {
            d_pi[i] += w[i] / m;
            d_theta[M_OFF + i] -= w[i] * pi[i] / (m * m);
        }
        Ok(())
    }

    fn potential_force_vjp(
        &self,
        phi: &[f64],
        _u: &[f64],
        w: &[f64],
        d_phi: &mut [f64],
        d_theta: &mut [f64],
        d_u: &mut [f64],
    ) -> Result<()> {
        for i in 0..N_OSC {
            d_phi[i] += self.k()[i] * w[i];
            d_theta[K_OFF + i] += w[i] * phi[i];
        }
        for (p, ((i, j), kp)) in pairs().into_iter().zip(self.k_pair()).enumerate() {
            let dw = w[j] - w[i];
            d_phi[j] += kp * dw;
            d_phi[i] -= kp * dw;
            d_theta[KP_OFF + p] += dw * (phi[j] - phi[i]);
        }
        d_phi[TRACKED] -= self.nudge * w[TRACKED];
        d_u[0] -= w[DRIVEN];
        d_u[1] += self.nudge * w[TRACKED];
        Ok(())
    }
}

/// a₁ sin(2πf₁t + p₁) + a₂ sin(2πf₂t + p₂).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoids {
    pub amps: [f64; 2],
    pub freqs: [f64; 2],
    pub phases: [f64; 2],
}

impl Sinusoids {
    pub fn zero() -> Self {
        Self {
            amps: [0.0; 2],
            freqs: [0.0; 2],
            phases: [0.0; 2],
        }
    }

    pub fn random(rng: &mut impl rand::Rng) -> Self {
        Self {
            amps: [rng.gen_range(0.5..1.0), rng.gen_range(0.2..0.5)],
            freqs: [rng.gen_range(0.05..0.2), rng.gen_range(0.2..0.5)],
            phases: [
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.0..std::f64::consts::TAU),
            ],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        (0..2)
            .map(|i| self.amps[i] * (std::f64::consts::TAU * self.freqs[i] * t + self.phases[i]).sin())
            .sum()
    }
}

/// Uniform grid on [0, T]. Input and target are tabulated at step midpoints
/// (held constant over each step) and the target also at grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub t_end: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub u_mid: Vec<f64>,
    pub y_mid: Vec<f64>,
    pub y_grid: Vec<f64>,
}

impl TimeGrid {
    pub fn new(t_end: f64, dt: f64, u: &Sinusoids, y: &Sinusoids) -> Result<Self> {
        if !(dt > 0.0) || !(t_end >= 0.0) {
            return Err(Error::InvalidParameter("grid needs dt > 0 and T ≥ 0".into()));
        }
        let ratio = t_end / dt;
        let n_steps = ratio.round() as usize;
        if (ratio - n_steps as f64).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidParameter("T/dt must be an integer".into()));
        }
        let mid = |j: usize| (j as f64 + 0.5) * dt;
        Ok(Self {
            t_end,
            dt,
            n_steps,
            u_mid: (0..n_steps).map(|j| u.eval(mid(j))).collect(),
            y_mid: (0..n_steps).map(|j| y.eval(mid(j))).collect(),
            y_grid: (0..=n_steps).map(|j| y.eval(j as f64 * dt)).collect(),
        })
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|j| j as f64 * self.dt).collect()
    }

    fn forward_inputs(&self) -> Vec<Vec<f64>> {
        self.u_mid.iter().zip(&self.y_mid).map(|(&u, &y)| vec![u, y]).collect()
    }
}

/// ℓ = scale·½(φ⁴ − y)².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyLoss {
    pub scale: f64,
}

impl ToyLoss {
    fn grad(&self, phi4: f64, y: f64) -> f64 {
        self.scale * (phi4 - y)
    }

    fn value(&self, phi4: f64, y: f64) -> f64 {
        0.5 * self.scale * (phi4 - y) * (phi4 - y)
    }
}

pub fn toy_forward(h: &ToyHamiltonian, grid: &TimeGrid, x0: &PhaseState) -> Result<Trajectory> {
    let h0 = h.with_nudge(0.0);
    rollout(&h0, x0, &grid.forward_inputs(), grid.dt, Precision::F64)
}

fn trapezoid(values: &[f64], dt: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    dt * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]))
}

/// L = ∫ℓ dt by the trapezoid rule on the grid.
pub fn toy_loss(traj: &Trajectory, grid: &TimeGrid, loss: &ToyLoss) -> f64 {
    let vals: Vec<f64> = (0..=grid.n_steps)
        .map(|j| loss.value(traj.state(j).phi()[TRACKED], grid.y_grid[j]))
        .collect();
    trapezoid(&vals, grid.dt)
}

/// Adjoint sensitivities on the reversed grid: index i is time s = i·dt,
/// which corresponds to forward grid point N − i.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSeries {
    pub lambda: Vec<PhaseState>,
    pub g_theta: Vec<Vec<f64>>,
}

impl AdjointSeries {
    /// ∫ g_θ ds, the total parameter gradient.
    pub fn total(&self, dt: f64) -> Vec<f64> {
        (0..N_TOY_PARAMS)
            .map(|p| trapezoid(&self.g_theta.iter().map(|g| g[p]).collect::<Vec<_>>(), dt))
            .collect()
    }
}

/// g_θ = ∂_θ(∇_Φ H)·Jᵀλ at the forward state Φ.
fn mixed_gradient(h: &ToyHamiltonian, s: &PhaseState, lam: &PhaseState) -> Vec<f64> {
    let mut g = vec![0.0; N_TOY_PARAMS];
    let (phi, pi) = (s.phi(), s.pi());
    let (lphi, lpi) = (lam.phi(), lam.pi());
    for i in 0..N_OSC {
        let m = h.m()[i];
        g[M_OFF + i] = -pi[i] / (m * m) * lphi[i];
        g[K_OFF + i] = -phi[i] * lpi[i];
    }
    for (p, (i, j)) in pairs().into_iter().enumerate() {
        g[KP_OFF + p] = -(phi[j] - phi[i]) * (lpi[j] - lpi[i]);
    }
    g
}

/// Integrates ∂_sλ = ∇²H·Jᵀλ + ∇ℓ from λ(0) = 0 with kick-drift-kick steps
/// on the grid, then evaluates g_θ(s).
pub fn toy_adjoint(h: &ToyHamiltonian, grid: &TimeGrid, traj: &Trajectory, loss: &ToyLoss) -> Result<AdjointSeries> {
    let n_steps = grid.n_steps;
    check_len("toy trajectory", n_steps, traj.len())?;
    let dt = grid.dt;
    let force = |i: usize| -> f64 {
        let j = n_steps - i;
        loss.grad(traj.state(j).phi()[TRACKED], grid.y_grid[j])
    };
    // With q = λ_π and p = λ_φ the system reads q̇ = M⁻¹p, ṗ = −Kq + f.
    let stiffness = |q: &[f64], out: &mut [f64]| {
        h.with_nudge(0.0).grad_potential(q, &[0.0, 0.0], out);
    };
    let mut lam = PhaseState::zeros(N_OSC);
    let mut lambda = Vec::with_capacity(n_steps + 1);
    let mut kq = vec![0.0; N_OSC];
    lambda.push(lam.clone());
    for i in 0..n_steps {
        {
            let (p, q) = lam.split_mut();
            stiffness(q, &mut kq);
            for a in 0..N_OSC {
                p[a] -= 0.5 * dt * kq[a];
            }
            p[TRACKED] += 0.5 * dt * force(i);
            for a in 0..N_OSC {
                q[a] += dt * p[a] / h.m()[a];
            }
            stiffness(q, &mut kq);
            for a in 0..N_OSC {
                p[a] -= 0.5 * dt * kq[a];
            }
            p[TRACKED] += 0.5 * dt * force(i + 1);
        }
        if !lam.is_finite() {
            return Err(Error::NonFiniteState { step: i, substep: "adjoint" });
        }
        lambda.push(lam.clone());
    }
    let g_theta = (0..=n_steps)
        .map(|i| mixed_gradient(h, traj.state(n_steps - i), &lambda[i]))
        .collect();
    Ok(AdjointSeries { lambda, g_theta })
}

/// Echo estimators on the reversed grid, same indexing as [`AdjointSeries`].
#[derive(Debug, Clone, PartialEq)]
pub struct EchoSeries {
    pub delta_state: Vec<PhaseState>,
    pub delta_theta: Vec<Vec<f64>>,
}

/// Runs the ±ε echoes of H − εℓ from the conjugated final state and forms
/// Δ_Φ = (1/2ε)Σ_x(Φᵉ(ε) − Φᵉ(−ε)) and Δ_θ = −(1/2ε)(∇_θH(ε) − ∇_θH(−ε)).
pub fn toy_echo(
    h: &ToyHamiltonian,
    grid: &TimeGrid,
    traj: &Trajectory,
    loss: &ToyLoss,
    epsilon: f64,
) -> Result<EchoSeries> {
    if epsilon == 0.0 {
        return Err(Error::EpsilonZero);
    }
    let n_steps = grid.n_steps;
    check_len("toy trajectory", n_steps, traj.len())?;
    let rev: Vec<Vec<f64>> = (0..n_steps)
        .map(|i| vec![grid.u_mid[n_steps - 1 - i], grid.y_mid[n_steps - 1 - i]])
        .collect();
    let start = traj.final_state().conjugate();
    let hp = h.with_nudge(epsilon * loss.scale);
    let hm = h.with_nudge(-epsilon * loss.scale);
    let (plus, minus) = rayon::join(
        || rollout(&hp, &start, &rev, grid.dt, Precision::F64),
        || rollout(&hm, &start, &rev, grid.dt, Precision::F64),
    );
    let (plus, minus) = (plus?, minus?);
    let c = 1.0 / (2.0 * epsilon);
    let h0 = h.with_nudge(0.0);
    let mut delta_state = Vec::with_capacity(n_steps + 1);
    let mut delta_theta = Vec::with_capacity(n_steps + 1);
    for i in 0..=n_steps {
        let (sp, sm) = (plus.state(i), minus.state(i));
        let diff: Vec<f64> = sp.as_slice().iter().zip(sm.as_slice()).map(|(a, b)| c * (a - b)).collect();
        delta_state.push(PhaseState::from_flat(diff)?.swap());
        let mut g = vec![0.0; N_TOY_PARAMS];
        h0.param_grad(sp, &[0.0, 0.0], -c, &mut g);
        h0.param_grad(sm, &[0.0, 0.0], c, &mut g);
        delta_theta.push(g);
    }
    Ok(EchoSeries {
        delta_state,
        delta_theta,
    })
}

/// One compared time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePair {
    pub name: String,
    pub rhel: Vec<f64>,
    pub adjoint: Vec<f64>,
}

impl CurvePair {
    /// max_t |rhel − adjoint| / max_t |adjoint|.
    pub fn sup_relative_error(&self) -> f64 {
        let err = self
            .rhel
            .iter()
            .zip(&self.adjoint)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = self.adjoint.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if scale == 0.0 {
            err
        } else {
            err / scale
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyComparison {
    /// Reversed time s = i·dt.
    pub times: Vec<f64>,
    pub curves: Vec<CurvePair>,
}

impl ToyComparison {
    pub fn curve(&self, name: &str) -> Option<&CurvePair> {
        self.curves.iter().find(|c| c.name == name)
    }

    pub fn worst_error(&self) -> f64 {
        self.curves.iter().map(|c| c.sup_relative_error()).fold(0.0, f64::max)
    }

    /// CSV with columns t, quantity_name, rhel_value, adjoint_value.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,quantity_name,rhel_value,adjoint_value\n");
        for c in &self.curves {
            for (i, t) in self.times.iter().enumerate() {
                s.push_str(&format!("{t},{},{:e},{:e}\n", c.name, c.rhel[i], c.adjoint[i]));
            }
        }
        s
    }
}

/// Parameter names in flat order: m1..m6, k1..k6, k12..k56 (1-based).
pub fn param_names() -> Vec<String> {
    let mut v: Vec<String> = (1..=N_OSC).map(|i| format!("m{i}")).collect();
    v.extend((1..=N_OSC).map(|i| format!("k{i}")));
    v.extend(pairs().into_iter().map(|(i, j)| format!("k{}{}", i + 1, j + 1)));
    v
}

/// Pairs every echo estimator with its adjoint counterpart.
pub fn toy_echo_compare(
    h: &ToyHamiltonian,
    grid: &TimeGrid,
    x0: &PhaseState,
    loss: &ToyLoss,
    epsilon: f64,
) -> Result<ToyComparison> {
    let traj = toy_forward(h, grid, x0)?;
    let adj = toy_adjoint(h, grid, &traj, loss)?;
    let echo = toy_echo(h, grid, &traj, loss, epsilon)?;
    let mut curves = Vec::new();
    for a in 0..N_OSC {
        curves.push(CurvePair {
            name: format!("lambda_phi{}", a + 1),
            rhel: echo.delta_state.iter().map(|s| s.phi()[a]).collect(),
            adjoint: adj.lambda.iter().map(|s| s.phi()[a]).collect(),
        });
        curves.push(CurvePair {
            name: format!("lambda_pi{}", a + 1),
            rhel: echo.delta_state.iter().map(|s| s.pi()[a]).collect(),
            adjoint: adj.lambda.iter().map(|s| s.pi()[a]).collect(),
        });
    }
    for (p, name) in param_names().into_iter().enumerate() {
        curves.push(CurvePair {
            name: format!("grad_{name}"),
            rhel: echo.delta_theta.iter().map(|g| g[p]).collect(),
            adjoint: adj.g_theta.iter().map(|g| g[p]).collect(),
        });
    }
    Ok(ToyComparison {
        times: grid.times(),
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn certification_passes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let h = ToyHamiltonian::random(&mut rng).with_nudge(0.37);
            crate::certify::certify_hamiltonian(&h, &mut rng, 1e-6).unwrap();
        }
    }

    #[test]
    fn static_without_forcing() {
        let h = ToyHamiltonian::new(&[1.0; 6], &[0.0; 6], &[0.0; 15]).unwrap();
        let grid = TimeGrid::new(1.0, 1e-2, &Sinusoids::zero(), &Sinusoids::zero()).unwrap();
        let x0 = PhaseState::new(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6], &[0.0; 6]).unwrap();
        let t = toy_forward(&h, &grid, &x0).unwrap();
        assert_eq!(t.final_state(), &x0);
    }

    #[test]
    fn grid_requires_integer_ratio() {
        assert!(TimeGrid::new(1.0, 0.3, &Sinusoids::zero(), &Sinusoids::zero()).is_err());
        assert!(TimeGrid::new(1.0, 0.0, &Sinusoids::zero(), &Sinusoids::zero()).is_err());
    }

    #[test]
    fn pair_names() {
        let names = param_names();
        assert_eq!(names.len(), N_TOY_PARAMS);
        assert_eq!(names[12], "k12");
        assert_eq!(names[26], "k56");
    }
}
