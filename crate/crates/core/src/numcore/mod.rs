//! Dense tensors with reverse-mode differentiation, Adam, and a
//! finite-difference gradient checker.

mod check;
mod optim;
mod params;
mod tape;

pub use check::{grad_check, GradCheckOptions, GradCheckReport, Objective};
pub use optim::{AdamConfig, AdamState};
pub use params::{Binding, ParamId, ParamStore};
pub use tape::{
    concat_cols, gelu_scalar, softmax_rows_values, Gradients, Mat, Tape, Var, LAYER_NORM_EPS,
    NORM_FLOOR,
};

use thiserror::Error;

/// SplitMix64-style combination of a base seed with a salt; stable across
/// platforms and releases.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("non-finite gradient for parameter `{name}` at update {step}")]
    NonFinite { name: String, step: u64 },
    #[error("objective is not deterministic: {first} vs {second}")]
    NonDeterministic { first: f64, second: f64 },
}
