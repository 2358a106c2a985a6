//! Finite-difference certification of analytic derivative capabilities.

use rand::Rng;

use crate::error::{Error, Result};
use crate::integrator::SeparableHamiltonian;
use crate::linalg::{dot, norm_sq};

pub const FD_STEP: f64 = 1e-5;

/// Central-difference gradient of `f` at `x`.
pub fn fd_gradient(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + FD_STEP;
        let fp = f(&xp);
        xp[i] = orig - FD_STEP;
        let fm = f(&xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * FD_STEP);
    }
    g
}

/// Relative error ‖a − b‖ / max(‖a‖, ‖b‖); zero when both are negligible.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = norm_sq(a).sqrt().max(norm_sq(b).sqrt());
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

pub fn check_close(what: &str, analytic: &[f64], reference: &[f64], tol: f64) -> Result<()> {
    let rel_err = relative_error(analytic, reference);
    if rel_err.is_finite() && rel_err <= tol {
        Ok(())
    } else {
        Err(Error::GradientCertificationFailed {
            what: what.to_string(),
            rel_err,
        })
    }
}

fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Checks every gradient and force-VJP of `h` at a random point.
pub fn certify_hamiltonian<H: SeparableHamiltonian + Clone>(
    h: &H,
    rng: &mut impl Rng,
    tol: f64,
) -> Result<()> {
    let (n, m, p) = (h.dim(), h.input_dim(), h.num_params());
    let phi = random_vec(rng, n);
    let pi = random_vec(rng, n);
    let u = random_vec(rng, m);
    let w = random_vec(rng, n);
    let theta = h.params().to_vec();
    let with = |q: &[f64]| {
        let mut hh = h.clone();
        hh.params_mut().copy_from_slice(q);
        hh
    };

    let mut g = vec![0.0; n];
    h.grad_kinetic(&pi, &mut g);
    check_close("kinetic gradient", &g, &fd_gradient(&pi, |q| h.kinetic(q)), tol)?;
    h.grad_potential(&phi, &u, &mut g);
    let fd = fd_gradient(&phi, |q| h.potential(q, &u));
    check_close("potential gradient", &g, &fd, tol)?;

    let mut gt = vec![0.0; p];
    h.kinetic_param_grad(&pi, 1.0, &mut gt);
    let fd = fd_gradient(&theta, |q| with(q).kinetic(&pi));
    check_close("kinetic parameter gradient", &gt, &fd, tol)?;
    let mut gt = vec![0.0; p];
    h.potential_param_grad(&phi, &u, 1.0, &mut gt);
    let fd = fd_gradient(&theta, |q| with(q).potential(&phi, &u));
    check_close("potential parameter gradient", &gt, &fd, tol)?;
    let mut gu = vec![0.0; m];
    h.potential_input_grad(&phi, &u, 1.0, &mut gu);
    let fd = fd_gradient(&u, |q| h.potential(&phi, q));
    check_close("potential input gradient", &gu, &fd, tol)?;

    let wk = |hh: &H, q: &[f64]| {
        let mut f = vec![0.0; n];
        hh.grad_kinetic(q, &mut f);
        dot(&w, &f)
    };
    let (mut dpi, mut dth) = (vec![0.0; n], vec![0.0; p]);
    h.kinetic_force_vjp(&pi, &w, &mut dpi, &mut dth)?;
    check_close("kinetic force vjp (state)", &dpi, &fd_gradient(&pi, |q| wk(h, q)), tol)?;
    let fd = fd_gradient(&theta, |q| wk(&with(q), &pi));
    check_close("kinetic force vjp (parameters)", &dth, &fd, tol)?;

    let wv = |hh: &H, q: &[f64], uu: &[f64]| {
        let mut f = vec![0.0; n];
        hh.grad_potential(q, uu, &mut f);
        dot(&w, &f)
    };
    let (mut dphi, mut dth, mut du) = (vec![0.0; n], vec![0.0; p], vec![0.0; m]);
    h.potential_force_vjp(&phi, &u, &w, &mut dphi, &mut dth, &mut du)?;
    let fd = fd_gradient(&phi, |q| wv(h, q, &u));
    check_close("potential force vjp (state)", &dphi, &fd, tol)?;
    let fd = fd_gradient(&theta, |q| wv(&with(q), &phi, &u));
    check_close("potential force vjp (parameters)", &dth, &fd, tol)?;
    let fd = fd_gradient(&u, |q| wv(h, &phi, q));
    check_close("potential force vjp (input)", &du, &fd, tol)?;
    Ok(())
}
