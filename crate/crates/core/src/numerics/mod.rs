//! Minimal dense-tensor arithmetic with reverse-mode differentiation, an
//! Adam optimizer, and a finite-difference gradient checker. 32-bit elements
//! for experiments, 64-bit for verification.

pub mod adam;
pub mod gradcheck;
pub mod kernels;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState, AdamStepCtx};
pub use gradcheck::{grad_check, DiffFragment, GradCheckReport};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{rel_l2, Real, Tensor};

#[cfg(test)]
mod adjoint_tests;
