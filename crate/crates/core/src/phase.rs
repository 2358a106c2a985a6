use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};

/// Point Φ = (φ, π) in phase space. Stored flat with φ first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    data: Vec<f64>,
}

impl PhaseState {
    pub fn new(phi: &[f64], pi: &[f64]) -> Result<Self> {
        check_len("phase state momentum", phi.len(), pi.len())?;
        let mut data = Vec::with_capacity(2 * phi.len());
        data.extend_from_slice(phi);
        data.extend_from_slice(pi);
        Ok(Self { data })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            data: vec![0.0; 2 * n],
        }
    }

    /// Builds a state from a flat `[φ, π]` vector of even length.
    pub fn from_flat(data: Vec<f64>) -> Result<Self> {
        if data.len() % 2 != 0 {
            return Err(crate::Error::ShapeMismatch {
                what: "flat phase state (even length)".into(),
                expected: data.len() + 1,
                got: data.len(),
            });
        }
        Ok(Self { data })
    }

    pub fn dim(&self) -> usize {
        self.data.len() / 2
    }

    pub fn phi(&self) -> &[f64] {
        &self.data[..self.dim()]
    }

    pub fn pi(&self) -> &[f64] {
        &self.data[self.dim()..]
    }

    pub fn phi_mut(&mut self) -> &mut [f64] {
        let n = self.dim();
        &mut self.data[..n]
    }

    pub fn pi_mut(&mut self) -> &mut [f64] {
        let n = self.dim();
        &mut self.data[n..]
    }

    pub fn split_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        let n = self.dim();
        self.data.split_at_mut(n)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Σ_z: flips the sign of the momentum.
    pub fn conjugate(&self) -> Self {
        let mut out = self.clone();
        for p in out.pi_mut() {
            *p = -*p;
        }
        out
    }

    /// Σ_x: exchanges position and momentum.
    pub fn swap(&self) -> Self {
        let n = self.dim();
        let mut data = Vec::with_capacity(2 * n);
        data.extend_from_slice(self.pi());
        data.extend_from_slice(self.phi());
        Self { data }
    }

    /// self += alpha * Σ_x(v).
    pub fn add_swapped(&mut self, alpha: f64, v: &[f64]) {
        let n = self.dim();
        debug_assert_eq!(v.len(), 2 * n);
        for i in 0..n {
            self.data[i] += alpha * v[n + i];
            self.data[n + i] += alpha * v[i];
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Σ_z as a free function.
pub fn conjugate(s: &PhaseState) -> PhaseState {
    s.conjugate()
}

/// Σ_x as a free function.
pub fn swap(s: &PhaseState) -> PhaseState {
    s.swap()
}
