#![allow(dead_code)]

use rand::Rng;
use rhel_core::linear::LinearHru;
use rhel_core::nonlinear::NonlinearHru;
use rhel_core::rhel::NudgeSequence;

pub fn random_linear(rng: &mut impl Rng, n: usize, m: usize) -> LinearHru {
    let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let b: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let d: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.6)).collect();
    LinearHru::new(&a, &b, &d, m).unwrap()
}

pub fn random_nonlinear(rng: &mut impl Rng, n: usize, m: usize) -> NonlinearHru {
    let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.0)).collect();
    let b: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let bias: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rd: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    NonlinearHru::new(&a, &b, &bias, rng.gen_range(0.1..1.0), &rd, m).unwrap()
}

pub fn random_inputs(rng: &mut impl Rng, k: usize, m: usize) -> Vec<Vec<f64>> {
    (0..k).map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

/// Random φ-only nudges on states 1..=K.
pub fn random_nudges(rng: &mut impl Rng, k: usize, n: usize) -> NudgeSequence {
    let mut ny = NudgeSequence::zeros(k, n);
    for g in ny.grads.iter_mut().skip(1) {
        for x in g.iter_mut().take(n) {
            *x = rng.gen_range(-1.0..1.0);
        }
    }
    ny
}

pub fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / nb.max(1e-300)
}
