use serde::{Deserialize, Serialize};

/// Storage precision for states, activations and gradients.
///
/// `F32` keeps the arithmetic in f64 but rounds every stored value to the
/// nearest f32, matching the rounding behaviour of a single-precision run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl Precision {
    pub fn from_bits(bits: u32) -> Option<Self> {
        match bits {
            32 => Some(Precision::F32),
            64 => Some(Precision::F64),
            _ => None,
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            Precision::F32 => 32,
            Precision::F64 => 64,
        }
    }

    #[inline]
    pub fn round(self, x: f64) -> f64 {
        match self {
            Precision::F32 => x as f32 as f64,
            Precision::F64 => x,
        }
    }

    #[inline]
    pub fn round_slice(self, xs: &mut [f64]) {
        if self == Precision::F32 {
            for x in xs.iter_mut() {
                *x = *x as f32 as f64;
            }
        }
    }
}
