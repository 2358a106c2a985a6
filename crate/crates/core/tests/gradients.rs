mod common;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rhel_core::baselines::{bptt_gradients, compare_gradients, finite_difference_oracle};
use rhel_core::linear::{linear_rhel_grads, LinearHru};
use rhel_core::rhel::*;
use rhel_core::{rollout, Error, PhaseState, Precision, SeparableHamiltonian, Trajectory};

/// L = Σ_k ⟨y_k, Φ_k⟩ over the forward trajectory; its gradient is exactly
/// what the nudges encode.
fn linear_objective<H: SeparableHamiltonian>(h: &H, x0: &PhaseState, inputs: &[Vec<f64>], ny: &NudgeSequence) -> f64 {
    let t = rollout(h, x0, inputs, 1.0, Precision::F64).unwrap();
    (0..=t.len())
        .map(|k| t.state(k).as_slice().iter().zip(&ny.grads[k]).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

fn pair_for<H: SeparableHamiltonian>(h: &H, t: &Trajectory, ny: &NudgeSequence, eps: f64) -> EchoPair {
    hru_echo_pair(h, t.final_state(), ny, &reversed(&t.inputs), eps, 1.0, Precision::F64).unwrap()
}

#[test]
fn zero_nudge_echo_is_time_reversed_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = random_nonlinear(&mut rng, 3, 2);
    let inputs = random_inputs(&mut rng, 20, 2);
    let x0 = PhaseState::new(&[0.1, -0.2, 0.3], &[0.0, 0.2, -0.1]).unwrap();
    let t = rollout(&h, &x0, &inputs, 1.0, Precision::F64).unwrap();
    let ny = NudgeSequence::zeros(20, 3);
    let rev = reversed(&inputs);
    let ep = echo_rollout(&h, &t.final_state().conjugate(), &rev, &ny, 1e-3, 1.0, Precision::F64).unwrap();
    let em = echo_rollout(&h, &t.final_state().conjugate(), &rev, &ny, -1e-3, 1.0, Precision::F64).unwrap();
    assert_eq!(ep, em);
    for k in 0..=20 {
        assert!(ep.state(k).max_abs_diff(&t.state(20 - k).conjugate()) < 1e-12);
    }
    let g = rhel_gradients(&pair_for(&h, &t, &ny, 1e-3), &h, &rev).unwrap();
    assert!(g.d_theta.iter().all(|&x| x == 0.0));
}

#[test]
fn initial_nudge_kicks_momentum() {
    let h = LinearHru::new(&[1.0], &[0.0], &[0.1], 1).unwrap();
    let t = rollout(&h, &PhaseState::new(&[1.0], &[0.0]).unwrap(), &[vec![0.0]], 1.0, Precision::F64).unwrap();
    let mut ny = NudgeSequence::zeros(1, 1);
    ny.grads[1] = vec![1.0, 0.0];
    let start = t.final_state().conjugate();
    let e = echo_rollout(&h, &start, &[vec![0.0]], &ny, 1e-3, 1.0, Precision::F64).unwrap();
    assert_eq!(e.initial.phi(), start.phi());
    assert!((e.initial.pi()[0] - (start.pi()[0] + 1e-3)).abs() < 1e-16);
}

#[test]
fn zero_epsilon_rejected() {
    let h = LinearHru::new(&[1.0], &[0.0], &[0.1], 1).unwrap();
    let ny = NudgeSequence::zeros(0, 1);
    let r = echo_rollout(&h, &PhaseState::zeros(1), &[], &ny, 0.0, 1.0, Precision::F64);
    assert_eq!(r.unwrap_err(), Error::EpsilonZero);
}

#[test]
fn linear_rhel_matches_bptt_three_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = random_linear(&mut rng, 2, 2);
    let inputs = random_inputs(&mut rng, 3, 2);
    let x0 = PhaseState::new(&[0.3, -0.1], &[0.2, 0.4]).unwrap();
    let t = rollout(&h, &x0, &inputs, 1.0, Precision::F64).unwrap();
    let ny = random_nudges(&mut rng, 3, 2);
    let r = rhel_gradients(&pair_for(&h, &t, &ny, 1e-4), &h, &reversed(&inputs)).unwrap();
    let b = bptt_gradients(&h, &t, &ny, Precision::F64).unwrap();
    assert!(rel(&r.d_theta, &b.d_theta) <= 1e-4);
    assert!(rel(&r.d_inputs.concat(), &b.d_inputs.concat()) <= 1e-4);
}

#[test]
fn bptt_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for nonlinear in [false, true] {
        let inputs = random_inputs(&mut rng, 12, 2);
        let ny = random_nudges(&mut rng, 12, 3);
        let x0 = PhaseState::new(&[0.3, -0.1, 0.2], &[0.2, 0.4, -0.3]).unwrap();
        let (bp, fd) = if nonlinear {
            let h = random_nonlinear(&mut rng, 3, 2);
            let t = rollout(&h, &x0, &inputs, 1.0, Precision::F64).unwrap();
            let bp = bptt_gradients(&h, &t, &ny, Precision::F64).unwrap();
            let fd = finite_difference_oracle(
                |p| {
                    let mut hh = h.clone();
                    hh.params_mut().copy_from_slice(p);
                    linear_objective(&hh, &x0, &inputs, &ny)
                },
                h.params(),
                1e-5,
            );
            (bp, fd)
        } else {
            let h = random_linear(&mut rng, 3, 2);
            let t = rollout(&h, &x0, &inputs, 1.0, Precision::F64).unwrap();
            let bp = bptt_gradients(&h, &t, &ny, Precision::F64).unwrap();
            let fd = finite_difference_oracle(
                |p| {
                    let mut hh = h.clone();
                    hh.params_mut().copy_from_slice(p);
                    linear_objective(&hh, &x0, &inputs, &ny)
                },
                h.params(),
                1e-5,
            );
            (bp, fd)
        };
        assert!(rel(&bp.d_theta, &fd) <= 1e-5, "nonlinear={nonlinear}: {}", rel(&bp.d_theta, &fd));
    }
}

#[test]
fn bptt_one_step_hand_chain_rule() {
    // n = 1, A = a, B = b, δ = d, x0 = 0, one input u, loss = φ₁.
    // φ₁ = ½d²·b·u, so ∂/∂b = ½d²u, ∂/∂a = 0, ∂/∂δ = d·b·u, ∂/∂u = ½d²b.
    let (a, b, d, u) = (0.7, 0.4, 0.3, 1.5);
    let h = LinearHru::new(&[a], &[b], &[d], 1).unwrap();
    let t = rollout(&h, &PhaseState::zeros(1), &[vec![u]], 1.0, Precision::F64).unwrap();
    let mut ny = NudgeSequence::zeros(1, 1);
    ny.grads[1] = vec![1.0, 0.0];
    let g = bptt_gradients(&h, &t, &ny, Precision::F64).unwrap();
    let expect = [0.0, 0.5 * d * d * u, d * b * u];
    for (x, y) in g.d_theta.iter().zip(&expect) {
        assert!((x - y).abs() < 1e-15, "{:?}", g.d_theta);
    }
    assert!((g.d_inputs[0][0] - 0.5 * d * d * b).abs() < 1e-15);
    assert_eq!(g.lambdas[1].as_slice(), &[1.0, 0.0]);
}

#[test]
fn bptt_zero_and_linearity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = random_nonlinear(&mut rng, 3, 2);
    let inputs = random_inputs(&mut rng, 10, 2);
    let t = rollout(&h, &PhaseState::zeros(3), &inputs, 1.0, Precision::F64).unwrap();
    let g0 = bptt_gradients(&h, &t, &NudgeSequence::zeros(10, 3), Precision::F64).unwrap();
    assert!(g0.d_theta.iter().all(|&x| x == 0.0));
    let ny = random_nudges(&mut rng, 10, 3);
    let mut ny2 = ny.clone();
    ny2.grads.iter_mut().flatten().for_each(|x| *x *= 2.0);
    let (g1, g2) = (
        bptt_gradients(&h, &t, &ny, Precision::F64).unwrap(),
        bptt_gradients(&h, &t, &ny2, Precision::F64).unwrap(),
    );
    for (x, y) in g1.d_theta.iter().zip(&g2.d_theta) {
        assert_eq!(2.0 * x, *y);
    }
}

#[test]
fn missing_hessian_reported() {
    struct NoHessian;
    impl SeparableHamiltonian for NoHessian {
        fn dim(&self) -> usize { 1 }
        fn input_dim(&self) -> usize { 0 }
        fn params(&self) -> &[f64] { &[] }
        fn params_mut(&mut self) -> &mut [f64] { &mut [] }
        fn kinetic(&self, pi: &[f64]) -> f64 { 0.5 * pi[0] * pi[0] }
        fn potential(&self, phi: &[f64], _: &[f64]) -> f64 { 0.5 * phi[0] * phi[0] }
        fn grad_kinetic(&self, pi: &[f64], o: &mut [f64]) { o[0] = pi[0] }
        fn grad_potential(&self, phi: &[f64], _: &[f64], o: &mut [f64]) { o[0] = phi[0] }
        fn kinetic_param_grad(&self, _: &[f64], _: f64, _: &mut [f64]) {}
        fn potential_param_grad(&self, _: &[f64], _: &[f64], _: f64, _: &mut [f64]) {}
        fn potential_input_grad(&self, _: &[f64], _: &[f64], _: f64, _: &mut [f64]) {}
    }
    let t = rollout(&NoHessian, &PhaseState::new(&[1.0], &[0.0]).unwrap(), &[vec![]], 0.1, Precision::F64).unwrap();
    let r = bptt_gradients(&NoHessian, &t, &NudgeSequence::zeros(1, 1), Precision::F64);
    assert_eq!(r.unwrap_err(), Error::MissingHessian);
}

#[test]
fn closed_form_linear_estimators_match_generic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = random_linear(&mut rng, 4, 3);
    let inputs = random_inputs(&mut rng, 30, 3);
    let t = rollout(&h, &PhaseState::zeros(4), &inputs, 1.0, Precision::F64).unwrap();
    let ny = random_nudges(&mut rng, 30, 4).with_gamma(3.0);
    let pair = pair_for(&h, &t, &ny, 1e-2);
    let rev = reversed(&inputs);
    let generic = rhel_gradients(&pair, &h, &rev).unwrap();
    let closed = linear_rhel_grads(&pair, &h, &rev).unwrap();
    let flat = [closed.d_a, closed.d_b, closed.d_delta].concat();
    for (x, y) in flat.iter().zip(&generic.d_theta) {
        assert!((x - y).abs() <= 1e-10, "{x} vs {y}");
    }
    for (x, y) in closed.d_u.concat().iter().zip(&generic.d_inputs.concat()) {
        assert!((x - y).abs() <= 1e-10);
    }
}

#[test]
fn closed_form_one_step_matches_fd_in_a() {
    let h = LinearHru::new(&[0.8], &[0.6], &[0.4], 1).unwrap();
    let x0 = PhaseState::new(&[0.5], &[-0.3]).unwrap();
    let inputs = vec![vec![0.7]];
    let mut ny = NudgeSequence::zeros(1, 1);
    ny.grads[1] = vec![1.3, -0.4];
    let t = rollout(&h, &x0, &inputs, 1.0, Precision::F64).unwrap();
    let g = linear_rhel_grads(&pair_for(&h, &t, &ny, 1e-4), &h, &inputs).unwrap();
    let fd = finite_difference_oracle(
        |p| linear_objective(&LinearHru::new(&[p[0]], &[0.6], &[0.4], 1).unwrap(), &x0, &inputs, &ny),
        &[0.8],
        1e-5,
    );
    assert!((g.d_a[0] - fd[0]).abs() / fd[0].abs() <= 1e-5);
}

#[test]
fn identical_echoes_give_zero_estimates() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = random_linear(&mut rng, 2, 1);
    let inputs = random_inputs(&mut rng, 5, 1);
    let t = rollout(&h, &PhaseState::zeros(2), &inputs, 1.0, Precision::F64).unwrap();
    let mut pair = pair_for(&h, &t, &random_nudges(&mut rng, 5, 2), 1e-3);
    pair.minus = pair.plus.clone();
    let g = linear_rhel_grads(&pair, &h, &reversed(&inputs)).unwrap();
    assert!(g.d_a.iter().chain(&g.d_b).chain(&g.d_delta).all(|&x| x == 0.0));
    assert!(g.d_u.iter().flatten().all(|&x| x == 0.0));
    pair.epsilon = 0.0;
    assert_eq!(linear_rhel_grads(&pair, &h, &reversed(&inputs)).unwrap_err(), Error::EpsilonZero);
}

#[test]
fn hru_backward_composes_echoes_and_estimator() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = random_nonlinear(&mut rng, 3, 2);
    let inputs = random_inputs(&mut rng, 15, 2);
    let t = rollout(&h, &PhaseState::zeros(3), &inputs, 1.0, Precision::F64).unwrap();
    let ny = random_nudges(&mut rng, 15, 3);
    let rev = reversed(&inputs);
    let (dt, du) = hru_backward(&h, t.final_state(), &ny, &rev, 1e-3, 1.0, Precision::F64).unwrap();
    let start = t.final_state().conjugate();
    let pair = EchoPair {
        plus: echo_rollout(&h, &start, &rev, &ny, 1e-3, 1.0, Precision::F64).unwrap(),
        minus: echo_rollout(&h, &start, &rev, &ny, -1e-3, 1.0, Precision::F64).unwrap(),
        epsilon: 1e-3,
        gamma: 1.0,
        precision: Precision::F64,
    };
    let g = rhel_gradients(&pair, &h, &rev).unwrap();
    assert_eq!(dt, g.d_theta);
    assert_eq!(du, g.d_inputs);
    let (z, zu) = hru_backward(&h, t.final_state(), &NudgeSequence::zeros(15, 3), &rev, 1e-3, 1.0, Precision::F64).unwrap();
    assert!(z.iter().chain(zu.iter().flatten()).all(|&x| x == 0.0));
}

#[test]
fn linear_hru_cosine_vs_bptt() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = random_linear(&mut rng, 8, 4);
    let inputs = random_inputs(&mut rng, 64, 4);
    let t = rollout(&h, &PhaseState::zeros(8), &inputs, 1.0, Precision::F64).unwrap();
    let ny = random_nudges(&mut rng, 64, 8);
    let (dt, du) = hru_backward(&h, t.final_state(), &ny, &reversed(&inputs), 1e-4, 1.0, Precision::F64).unwrap();
    let b = bptt_gradients(&h, &t, &ny, Precision::F64).unwrap();
    let c = compare_gradients(&dt, &b.d_theta);
    assert!(c.cosine >= 0.999 && (c.norm_ratio - 1.0).abs() < 1e-3);
    assert!(compare_gradients(&du.concat(), &b.d_inputs.concat()).cosine >= 0.999);
}

#[test]
fn state_sensitivities_match_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h = random_nonlinear(&mut rng, 3, 2);
    let inputs = random_inputs(&mut rng, 10, 2);
    let t = rollout(&h, &PhaseState::zeros(3), &inputs, 1.0, Precision::F64).unwrap();
    let ny = random_nudges(&mut rng, 10, 3);
    let r = rhel_gradients(&pair_for(&h, &t, &ny, 1e-5), &h, &reversed(&inputs)).unwrap();
    let b = bptt_gradients(&h, &t, &ny, Precision::F64).unwrap();
    // The final-state sensitivity is the final nudge itself.
    assert!(r.d_states[10].max_abs_diff(&PhaseState::from_flat(ny.grads[10].clone()).unwrap()) < 1e-12);
    for k in 0..=10 {
        assert!(r.d_states[k].max_abs_diff(&b.lambdas[k]) < 1e-8, "state {k}");
    }
}

#[test]
fn nonlinear_error_is_quadratic_in_epsilon() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let h = random_nonlinear(&mut rng, 4, 2);
    let inputs = random_inputs(&mut rng, 20, 2);
    let t = rollout(&h, &PhaseState::zeros(4), &inputs, 1.0, Precision::F64).unwrap();
    let ny = random_nudges(&mut rng, 20, 4);
    let b = bptt_gradients(&h, &t, &ny, Precision::F64).unwrap();
    let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
        .iter()
        .map(|&e| rel(&rhel_gradients(&pair_for(&h, &t, &ny, e), &h, &reversed(&inputs)).unwrap().d_theta, &b.d_theta))
        .collect();
    assert!(errs[1] <= 0.5 * errs[0] && errs[2] <= 0.5 * errs[1], "{errs:?}");
}

#[test]
fn gamma_rescaling_is_invariant_in_double() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = random_nonlinear(&mut rng, 3, 2);
    let inputs = random_inputs(&mut rng, 16, 2);
    let t = rollout(&h, &PhaseState::zeros(3), &inputs, 1.0, Precision::F64).unwrap();
    let mut ny = random_nudges(&mut rng, 16, 3);
    ny.grads.iter_mut().flatten().for_each(|x| *x *= 1e-4);
    let rev = reversed(&inputs);
    let eps = 1e-3;
    let (g1, _) = hru_backward(&h, t.final_state(), &ny, &rev, eps, 1.0, Precision::F64).unwrap();
    // ε·γ fixed keeps the echoes identical; only the output scaling changes.
    let (g2, _) = hru_backward(&h, t.final_state(), &ny.clone().with_gamma(1e4), &rev, eps / 1e4, 1.0, Precision::F64).unwrap();
    assert!(rel(&g2, &g1) <= 1e-9, "{}", rel(&g2, &g1));
}
