//! Dense tensors and the element trait shared by the 32-bit experiment mode
//! and the 64-bit verification mode.

use std::fmt;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Element type of every tensor in the crate. Experiments run `f32`,
/// verification suites (gradient checks, schedule algebra) run `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + fmt::Debug
    + fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Bytes per element in checkpoint files.
    const WIDTH: u32;

    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    const WIDTH: u32 = 4;
    #[inline]
    fn of_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    const WIDTH: u32 = 8;
    #[inline]
    fn of_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense row-major tensor with an optional gradient accumulator.
#[derive(Clone, Debug)]
pub struct Tensor<E> {
    shape: Vec<usize>,
    data: Vec<E>,
    pub requires_grad: bool,
    pub grad: Option<Vec<E>>,
}

impl<E: Real> Tensor<E> {
    pub fn new(shape: Vec<usize>, data: Vec<E>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {:?} wants {} elements, got {}", shape, numel, data.len()),
            ));
        }
        Ok(Tensor { shape, data, requires_grad: false, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: vec![E::zero(); numel], requires_grad: false, grad: None }
    }

    pub fn scalar(v: E) -> Self {
        Tensor { shape: vec![1], data: vec![v], requires_grad: false, grad: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    /// Add `g` into the gradient accumulator, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[E]) {
        debug_assert_eq!(g.len(), self.data.len());
        let grad = self.grad.get_or_insert_with(|| vec![E::zero(); self.data.len()]);
        for (a, b) in grad.iter_mut().zip(g) {
            *a = *a + *b;
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn assert_finite(&self, ctx: &str) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite values in {ctx}")));
        }
        Ok(())
    }
}

/// Relative L2 distance `|a - b| / max(|b|, eps)`; shapes must already agree.
pub fn rel_l2<E: Real>(a: &[E], b: &[E]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x.as_f64() - y.as_f64();
        num += d * d;
        den += y.as_f64() * y.as_f64();
    }
    (num.sqrt()) / den.sqrt().max(1e-300)
}
