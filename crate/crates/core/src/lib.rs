//! skipstep: a desk-scale laboratory for compressing conditional diffusion
//! samplers. Two procedures are implemented end to end on a self-contained
//! toy image-to-image stack: depth-skip pruning of the U-Net denoiser and a
//! one-dimensional greedy search over gamma-biased time-step schedules.

pub mod error;
pub mod numerics;
pub mod pipeline;
pub mod denoiser;
pub mod diffusion;
pub mod schedule;
pub mod search;
pub mod tasks;
pub mod rng;

pub use error::{Error, Result};
