//! Continuous-time oscillator comparison between echo estimates and the adjoint.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rhel_core::toy::{toy_echo_compare, Sinusoids, TimeGrid, ToyComparison, ToyHamiltonian, ToyLoss, N_OSC};
use rhel_core::PhaseState;
use serde::Serialize;

use crate::config::ToyConfig;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub worst_error: f64,
}

#[derive(Debug, Clone)]
pub struct ToyOutcome {
    pub comparison: ToyComparison,
    pub sweep: Vec<SweepRow>,
}

/// Parameters, input and target signals drawn from `seed`.
pub fn toy_setup(cfg: &ToyConfig, seed: u64) -> Result<(ToyHamiltonian, TimeGrid)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = ToyHamiltonian::random(&mut rng);
    let u = Sinusoids::random(&mut rng);
    let y = Sinusoids::random(&mut rng);
    Ok((h, TimeGrid::new(cfg.t_end, cfg.dt, &u, &y)?))
}

pub fn run_toy(cfg: &ToyConfig, seed: u64) -> Result<ToyOutcome> {
    let (h, grid) = toy_setup(cfg, seed)?;
    let x0 = PhaseState::zeros(N_OSC);
    let loss = ToyLoss { scale: cfg.loss_scale };
    let comparison = toy_echo_compare(&h, &grid, &x0, &loss, cfg.epsilon)?;
    let sweep = cfg
        .sweep
        .iter()
        .map(|&e| {
            Ok(SweepRow {
                epsilon: e,
                worst_error: toy_echo_compare(&h, &grid, &x0, &loss, e)?.worst_error(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ToyOutcome { comparison, sweep })
}
