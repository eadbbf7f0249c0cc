//! Adam with bias correction over named parameters.

use indexmap::IndexMap;

use crate::error::{Error, Result};

use super::tensor::Real;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

struct Moments<E> {
    m: Vec<E>,
    v: Vec<E>,
}

/// Per-step constants derived from the step counter; `Copy` so the borrow of
/// the state stays free for `update_param`.
#[derive(Clone, Copy)]
pub struct AdamStepCtx {
    lr_corrected: f64,
    sqrt_bc2: f64,
}

/// First/second moment accumulators per tracked parameter plus the step
/// counter. Parameters not listed at construction are frozen: the optimizer
/// never touches them.
pub struct AdamState<E> {
    pub config: AdamConfig,
    step: u64,
    moments: IndexMap<String, Moments<E>>,
}

impl<E: Real> AdamState<E> {
    pub fn new(config: AdamConfig, tracked: impl IntoIterator<Item = (String, usize)>) -> Self {
        let moments = tracked
            .into_iter()
            .map(|(name, numel)| (name, Moments { m: vec![E::zero(); numel], v: vec![E::zero(); numel] }))
            .collect();
        AdamState { config, step: 0, moments }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn tracked(&self) -> usize {
        self.moments.len()
    }

    pub fn tracks(&self, name: &str) -> bool {
        self.moments.contains_key(name)
    }

    /// Advance the step counter (exactly once per optimization step) and
    /// return the bias-correction constants for this step.
    pub fn step_begin(&mut self) -> AdamStepCtx {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.config.beta1.powf(t);
        let bc2 = 1.0 - self.config.beta2.powf(t);
        AdamStepCtx { lr_corrected: self.config.lr / bc1, sqrt_bc2: bc2.sqrt() }
    }

    /// Apply the update for one tracked parameter. A `grad` of `None` is an
    /// error naming the parameter.
    pub fn update_param(
        &mut self,
        ctx: AdamStepCtx,
        name: &str,
        params: &mut [E],
        grad: Option<&[E]>,
    ) -> Result<()> {
        let grad =
            grad.ok_or_else(|| Error::Numeric(format!("missing gradient for parameter {name}")))?;
        let mo = self
            .moments
            .get_mut(name)
            .ok_or_else(|| Error::InvalidArg(format!("parameter {name} is not tracked by the optimizer")))?;
        if grad.len() != params.len() || mo.m.len() != params.len() {
            return Err(Error::shape("adam_step", format!("size mismatch on {name}")));
        }
        let c = &self.config;
        let (b1, b2) = (E::of_f64(c.beta1), E::of_f64(c.beta2));
        let one_m_b1 = E::of_f64(1.0 - c.beta1);
        let one_m_b2 = E::of_f64(1.0 - c.beta2);
        let lr = E::of_f64(ctx.lr_corrected);
        let sqrt_bc2 = E::of_f64(ctx.sqrt_bc2);
        let eps = E::of_f64(c.eps);
        for ((p, &g), (m, v)) in params.iter_mut().zip(grad).zip(mo.m.iter_mut().zip(mo.v.iter_mut())) {
            *m = b1 * *m + one_m_b1 * g;
            *v = b2 * *v + one_m_b2 * g * g;
            *p = *p - lr * *m / (v.sqrt() / sqrt_bc2 + eps);
        }
        Ok(())
    }
}
