//! Minimal deterministic tensor/autodiff engine: exactly the layer set the
//! networks here need (4x4 stride-2 conv, batch norm, relu, dense, softmax,
//! dropout, flatten, concat), Adam/SGD, and finite-difference verification.

pub mod conv;
pub mod gradcheck;
pub mod matmul;
pub mod optim;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, rel_error, GradCheckReport};
pub use optim::{OptimizerKind, OptimizerState};
pub use scalar::{DType, Scalar};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Where the generator noise input comes from: dropout applied inside the
/// generator's fully connected stack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub rate: f64,
    pub active_at_inference: bool,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { rate: 0.5, active_at_inference: false }
    }
}

impl NoiseSpec {
    pub fn off() -> Self {
        NoiseSpec { rate: 0.0, active_at_inference: false }
    }

    pub fn with_rate(rate: f64) -> Self {
        NoiseSpec { rate, active_at_inference: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::Parameter(format!(
                "noise rate must be in [0,1), got {}",
                self.rate
            )));
        }
        Ok(())
    }
}

/// Forward-pass mode: train uses batch statistics and updates running ones,
/// eval uses stored statistics and is side-effect free.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
