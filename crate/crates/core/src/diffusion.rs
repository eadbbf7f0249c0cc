//! Forward noising, the conditional training loss, and a DDIM sampler over
//! arbitrary increasing timestep subsequences with stochasticity `eta` and
//! two-pass guidance.
//!
//! Pixel data is in the model range `[-1, 1]` throughout this module.

use rand::Rng;

use crate::denoiser::{DenoiserModel, GradMap};
use crate::error::{Error, Result};
use crate::numerics::{Real, Tape};
use crate::rng;
use crate::schedule::TimestepSchedule;

/// Per-timestep diffusion coefficients over `t_total` trained steps.
#[derive(Clone, Debug)]
pub struct NoiseSchedule {
    pub t_total: usize,
    pub betas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

/// Linear betas from 1e-4 to 0.02 inclusive; alpha_bar by cumulative product.
pub fn linear_beta_schedule(t_total: usize) -> Result<NoiseSchedule> {
    if t_total < 2 {
        return Err(Error::Config(format!("need at least 2 timesteps, got {t_total}")));
    }
    let (b0, b1) = (1e-4, 0.02);
    let mut betas = Vec::with_capacity(t_total);
    let mut alpha_bars = Vec::with_capacity(t_total);
    let mut prod = 1.0;
    for t in 0..t_total {
        let beta = b0 + (b1 - b0) * t as f64 / (t_total - 1) as f64;
        prod *= 1.0 - beta;
        betas.push(beta);
        alpha_bars.push(prod);
    }
    Ok(NoiseSchedule { t_total, betas, alpha_bars })
}

impl NoiseSchedule {
    fn check_t(&self, t: usize) -> Result<()> {
        if t >= self.t_total {
            return Err(Error::InvalidArg(format!("timestep {t} outside 0..{}", self.t_total)));
        }
        Ok(())
    }
}

/// `x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`.
pub fn q_sample<E: Real>(x0: &[E], t: usize, eps: &[E], sched: &NoiseSchedule) -> Result<Vec<E>> {
    sched.check_t(t)?;
    if x0.len() != eps.len() {
        return Err(Error::shape("q_sample", format!("{} vs {} elements", x0.len(), eps.len())));
    }
    let a = E::of_f64(sched.alpha_bars[t].sqrt());
    let b = E::of_f64((1.0 - sched.alpha_bars[t]).sqrt());
    Ok(x0.iter().zip(eps).map(|(&x, &e)| a * x + b * e).collect())
}

/// Anything that predicts the noise component of `x_t` given a condition.
/// `depth` overrides the depth-skip level for one call.
pub trait NoisePredictor<E: Real> {
    fn x_numel(&self) -> usize;
    fn predict(
        &self,
        x: &[E],
        cond: &[E],
        t: usize,
        t_total: usize,
        depth: Option<usize>,
    ) -> Result<Vec<E>>;
}

impl<E: Real> NoisePredictor<E> for DenoiserModel<E> {
    fn x_numel(&self) -> usize {
        self.config.in_channels * self.config.image_size * self.config.image_size
    }

    fn predict(
        &self,
        x: &[E],
        cond: &[E],
        t: usize,
        t_total: usize,
        depth: Option<usize>,
    ) -> Result<Vec<E>> {
        DenoiserModel::predict(self, x, cond, t, t_total, depth)
    }
}

/// Draws behind one training-loss sample, in stream order.
struct LossDraws<E> {
    t: usize,
    dropped: bool,
    eps: Vec<E>,
}

fn loss_draws<E: Real>(seed: u64, numel: usize, t_total: usize, p_drop: f64) -> LossDraws<E> {
    let mut r = rng::stream(seed, "noise");
    let t = r.random_range(0..t_total);
    let dropped = r.random_range(0.0..1.0) < p_drop;
    let eps = rng::normal_vec(&mut r, numel);
    LossDraws { t, dropped, eps }
}

/// Loss value with everything random held fixed: mean squared error between
/// the predicted and true noise at one `(t, eps)` draw.
pub fn noise_loss_at<E: Real, P: NoisePredictor<E>>(
    predictor: &P,
    sched: &NoiseSchedule,
    x0: &[E],
    cond: &[E],
    t: usize,
    eps: &[E],
) -> Result<f64> {
    let x_t = q_sample(x0, t, eps, sched)?;
    let pred = predictor.predict(&x_t, cond, t, sched.t_total, None)?;
    if pred.len() != eps.len() {
        return Err(Error::shape("noise_loss", "prediction shape differs from noise".to_string()));
    }
    let n = eps.len() as f64;
    Ok(pred.iter().zip(eps).map(|(&p, &e)| (p.as_f64() - e.as_f64()).powi(2)).sum::<f64>() / n)
}

/// Seeded loss value: samples `t` uniformly, drops the condition with
/// probability `p_drop`, draws standard-normal noise.
pub fn noise_loss_value<E: Real, P: NoisePredictor<E>>(
    predictor: &P,
    sched: &NoiseSchedule,
    x0: &[E],
    cond: &[E],
    seed: u64,
    p_drop: f64,
) -> Result<f64> {
    let draws = loss_draws::<E>(seed, x0.len(), sched.t_total, p_drop);
    let zeros;
    let c = if draws.dropped {
        zeros = vec![E::zero(); cond.len()];
        &zeros
    } else {
        cond
    };
    noise_loss_at(predictor, sched, x0, c, draws.t, &draws.eps)
}

/// Seeded training loss through the tape: returns the loss value and the
/// per-parameter gradients of this sample. Uses the same draws as
/// [`noise_loss_value`].
pub fn training_loss<E: Real>(
    model: &DenoiserModel<E>,
    sched: &NoiseSchedule,
    x0: &[E],
    cond: &[E],
    seed: u64,
    p_drop: f64,
) -> Result<(f64, GradMap<E>)> {
    let cfg = &model.config;
    let s = cfg.image_size;
    if cfg.out_channels != cfg.in_channels {
        return Err(Error::Config(
            "noise prediction needs out_channels == in_channels".to_string(),
        ));
    }
    let draws = loss_draws::<E>(seed, x0.len(), sched.t_total, p_drop);
    let x_t = q_sample(x0, draws.t, &draws.eps, sched)?;
    let cond_data = if draws.dropped { vec![E::zero(); cond.len()] } else { cond.to_vec() };
    let mut tape = Tape::new();
    let xv = tape.leaf(vec![cfg.in_channels, s, s], x_t, false)?;
    let cv = tape.leaf(vec![cfg.cond_channels, s, s], cond_data, false)?;
    let pass = model.forward(&mut tape, xv, cv, draws.t, sched.t_total)?;
    let target = tape.leaf(vec![cfg.in_channels, s, s], draws.eps, false)?;
    let loss = tape.sq_err_mean(pass.out, target)?;
    let loss_value = tape.scalar_value(loss).as_f64();
    if !loss_value.is_finite() {
        return Err(Error::Numeric("non-finite training loss".to_string()));
    }
    let grads = tape.backward(loss)?;
    Ok((loss_value, pass.grad_map(&grads)))
}

/// A 64-bit noise-prediction loss with every random draw frozen, for the
/// finite-difference gradient checker.
pub struct UNetLossFragment {
    pub model: DenoiserModel<f64>,
    pub sched: NoiseSchedule,
    pub x0: Vec<f64>,
    pub cond: Vec<f64>,
    pub t: usize,
    pub eps: Vec<f64>,
}

impl UNetLossFragment {
    /// Random probe data from a seed: unit-range image statistics. Every
    /// parameter is jittered off its init so the zero-initialised output conv
    /// does not hide interior gradients.
    pub fn seeded(mut model: DenoiserModel<f64>, sched: NoiseSchedule, seed: u64) -> Self {
        for (name, p) in model.params.iter_mut() {
            let mut r = rng::stream(seed, &format!("frag/jitter/{name}"));
            for v in p.tensor.data_mut() {
                *v += 0.05 * r.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
        let cfg = &model.config;
        let s = cfg.image_size;
        let scale = |v: Vec<f64>| v.into_iter().map(|x| (0.5 * x).clamp(-1.0, 1.0)).collect();
        let x0 = scale(rng::normal_vec(&mut rng::stream(seed, "frag/x0"), cfg.in_channels * s * s));
        let cond =
            scale(rng::normal_vec(&mut rng::stream(seed, "frag/cond"), cfg.cond_channels * s * s));
        let eps = rng::normal_vec(&mut rng::stream(seed, "frag/eps"), cfg.in_channels * s * s);
        let t = sched.t_total / 3;
        UNetLossFragment { model, sched, x0, cond, t, eps }
    }
}

impl crate::numerics::DiffFragment for UNetLossFragment {
    fn param_names(&self) -> Vec<(String, usize)> {
        self.model
            .params
            .iter()
            .filter(|(_, p)| p.tensor.requires_grad)
            .map(|(n, p)| (n.clone(), p.tensor.numel()))
            .collect()
    }

    fn get(&self, name: &str, idx: usize) -> f64 {
        self.model.params[name].tensor.data()[idx]
    }

    fn set(&mut self, name: &str, idx: usize, v: f64) {
        self.model.params.get_mut(name).unwrap().tensor.data_mut()[idx] = v;
    }

    fn loss(&mut self) -> f64 {
        noise_loss_at(&self.model, &self.sched, &self.x0, &self.cond, self.t, &self.eps)
            .expect("fragment shapes are fixed")
    }

    fn loss_and_grads(&mut self) -> Result<(f64, std::collections::HashMap<String, Vec<f64>>)> {
        let cfg = &self.model.config;
        let s = cfg.image_size;
        let x_t = q_sample(&self.x0, self.t, &self.eps, &self.sched)?;
        let mut tape = Tape::new();
        let xv = tape.leaf(vec![cfg.in_channels, s, s], x_t, false)?;
        let cv = tape.leaf(vec![cfg.cond_channels, s, s], self.cond.clone(), false)?;
        let pass = self.model.forward(&mut tape, xv, cv, self.t, self.sched.t_total)?;
        let target = tape.leaf(vec![cfg.in_channels, s, s], self.eps.clone(), false)?;
        let loss = tape.sq_err_mean(pass.out, target)?;
        let value = tape.scalar_value(loss);
        let grads = tape.backward(loss)?;
        Ok((value, pass.grad_map(&grads).into_iter().collect()))
    }
}

/// Sampler configuration for one run.
#[derive(Clone, Debug)]
pub struct SamplerSpec {
    /// 0 = deterministic; 1 = ancestral-like stochasticity.
    pub eta: f64,
    /// Guidance scale `w`: `eps = eps_uncond + w (eps_cond - eps_uncond)`.
    /// `w = 1` takes the single-pass conditional path exactly.
    pub guidance: f64,
    pub noise_seed: u64,
    /// Clamp the per-step clean-image estimate to [-1, 1]. At high timesteps
    /// `1/sqrt(abar)` amplifies small prediction bias a hundredfold; without
    /// the clamp, pixel-space sampling at desk scale drifts off range.
    pub clamp_x0: bool,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        SamplerSpec { eta: 0.0, guidance: 1.0, noise_seed: 0, clamp_x0: true }
    }
}

/// Instrumentation: model invocations and the timesteps they happened at.
#[derive(Clone, Debug, Default)]
pub struct SampleStats {
    pub model_calls: u64,
    pub evaluated_timesteps: Vec<usize>,
}

impl SampleStats {
    /// Invocations one image costs: `steps x 1` at `w = 1`, else `steps x 2`.
    pub fn expected_calls(steps: usize, guidance: f64) -> u64 {
        (steps as u64) * if guidance == 1.0 { 1 } else { 2 }
    }
}

/// DDIM noise scale between two scheduled steps:
/// `eta * sqrt((1-abar_prev)/(1-abar)) * sqrt(1 - abar/abar_prev)`.
pub fn ddim_sigma(eta: f64, abar: f64, abar_prev: f64) -> f64 {
    eta * ((1.0 - abar_prev) / (1.0 - abar)).sqrt() * (1.0 - abar / abar_prev).sqrt()
}

fn guided_predict<E: Real, P: NoisePredictor<E>>(
    predictor: &P,
    x: &[E],
    cond: &[E],
    t: usize,
    t_total: usize,
    guidance: f64,
    depth: Option<usize>,
    stats: &mut SampleStats,
) -> Result<Vec<E>> {
    stats.evaluated_timesteps.push(t);
    if guidance == 1.0 {
        stats.model_calls += 1;
        return predictor.predict(x, cond, t, t_total, depth);
    }
    stats.model_calls += 2;
    let zero_cond = vec![E::zero(); cond.len()];
    let e_u = predictor.predict(x, &zero_cond, t, t_total, depth)?;
    let e_c = predictor.predict(x, cond, t, t_total, depth)?;
    let w = E::of_f64(guidance);
    Ok(e_u.iter().zip(&e_c).map(|(&u, &c)| u + w * (c - u)).collect())
}

/// DDIM sampling along `timesteps` (strictly increasing), iterated from the
/// largest down. After the smallest scheduled step the current clean-image
/// estimate is returned directly, clamped to `[-1, 1]`.
pub fn ddim_sample<E: Real, P: NoisePredictor<E>>(
    predictor: &P,
    sched: &NoiseSchedule,
    cond: &[E],
    timesteps: &TimestepSchedule,
    spec: &SamplerSpec,
    depths: Option<&[usize]>,
    stats: &mut SampleStats,
) -> Result<Vec<E>> {
    let steps = timesteps.steps();
    if steps.is_empty() {
        return Err(Error::InvalidArg("timestep schedule is empty".to_string()));
    }
    for w in steps.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidArg("timesteps must be strictly increasing".to_string()));
        }
    }
    sched.check_t(*steps.last().unwrap())?;
    if let Some(d) = depths {
        if d.len() != steps.len() {
            return Err(Error::InvalidArg(format!(
                "{} per-step depths for {} steps",
                d.len(),
                steps.len()
            )));
        }
    }
    let numel = predictor.x_numel();
    let mut x: Vec<E> = rng::normal_vec(&mut rng::stream(spec.noise_seed, "xT"), numel);
    // iteration position j = 0 is the largest timestep
    for j in 0..steps.len() {
        let i = steps.len() - 1 - j;
        let tau = steps[i];
        let depth = depths.map(|d| d[j]);
        let eps_hat =
            guided_predict(predictor, &x, cond, tau, sched.t_total, spec.guidance, depth, stats)?;
        let abar = sched.alpha_bars[tau];
        let sa = E::of_f64(abar.sqrt());
        let sb = E::of_f64((1.0 - abar).sqrt());
        let one = E::one();
        let mut x0_hat: Vec<E> =
            x.iter().zip(&eps_hat).map(|(&xv, &ev)| (xv - sb * ev) / sa).collect();
        if spec.clamp_x0 {
            for v in x0_hat.iter_mut() {
                *v = v.max(-one).min(one);
            }
        }
        if i == 0 {
            return Ok(x0_hat.iter().map(|&v| v.max(-one).min(one)).collect());
        }
        let tau_prev = steps[i - 1];
        let abar_prev = sched.alpha_bars[tau_prev];
        let sigma = ddim_sigma(spec.eta, abar, abar_prev);
        let sap = E::of_f64(abar_prev.sqrt());
        let dir = E::of_f64((1.0 - abar_prev - sigma * sigma).max(0.0).sqrt());
        if sigma > 0.0 {
            let z: Vec<E> =
                rng::normal_vec(&mut rng::stream(spec.noise_seed, &format!("z/{j}")), numel);
            let sg = E::of_f64(sigma);
            x = x0_hat
                .iter()
                .zip(&eps_hat)
                .zip(&z)
                .map(|((&x0v, &ev), &zv)| sap * x0v + dir * ev + sg * zv)
                .collect();
        } else {
            x = x0_hat.iter().zip(&eps_hat).map(|(&x0v, &ev)| sap * x0v + dir * ev).collect();
        }
    }
    unreachable!("loop returns at the smallest scheduled step")
}
