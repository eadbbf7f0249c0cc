//! Evaluation protocol: deterministic sampling over disjoint validation
//! items, scored against the full-depth N-step reference started from the
//! same noise, with the clean target reported alongside.

use rayon::prelude::*;

use crate::denoiser::DenoiserModel;
use crate::diffusion::{ddim_sample, NoiseSchedule, SamplerSpec, SampleStats};
use crate::error::{Error, Result};
use crate::numerics::Real;
use crate::rng;
use crate::schedule::{uniform_schedule, TimestepSchedule};
use crate::tasks::{mse, psnr_db, to_unit_range, QualityResult};

use super::config::RunConfig;
use super::train::val_pair;

#[derive(Clone, Debug)]
pub struct EvalRow {
    pub index: usize,
    pub mse_ref: f64,
    pub psnr_ref: f64,
    pub mse_target: f64,
    pub psnr_target: f64,
}

pub struct EvalResult<E> {
    pub rows: Vec<EvalRow>,
    pub sampler_calls: u64,
    /// Per item: (condition, output, target, reference), all in [0,1].
    pub images: Vec<[Vec<E>; 4]>,
}

impl<E> EvalResult<E> {
    /// CSV schema: `index,mse_ref,psnr_ref,mse_target,psnr_target`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,mse_ref,psnr_ref,mse_target,psnr_target\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.index, r.mse_ref, r.psnr_ref, r.mse_target, r.psnr_target
            ));
        }
        s
    }

    pub fn quality_vs_reference(&self) -> QualityResult {
        quality_from(self.rows.iter().map(|r| (r.mse_ref, r.psnr_ref)))
    }

    pub fn quality_vs_target(&self) -> QualityResult {
        quality_from(self.rows.iter().map(|r| (r.mse_target, r.psnr_target)))
    }
}

fn quality_from(it: impl Iterator<Item = (f64, f64)>) -> QualityResult {
    let per_image: Vec<(f64, f64)> = it.collect();
    let n = per_image.len().max(1) as f64;
    let mean_mse = per_image.iter().map(|(m, _)| m).sum::<f64>() / n;
    let mean_psnr = per_image.iter().map(|(_, p)| p).sum::<f64>() / n;
    let var = per_image.iter().map(|(_, p)| (p - mean_psnr) * (p - mean_psnr)).sum::<f64>() / n;
    QualityResult { per_image, mean_mse, mean_psnr, std_psnr: var.sqrt() }
}

/// Evaluate `schedule` at `depth` over the first `count` validation items.
/// The reference is the same model at full depth under the `eval.n_ref`-step
/// uniform schedule, started from the same per-item noise.
pub fn evaluate_schedule<E: Real>(
    model: &DenoiserModel<E>,
    noise: &NoiseSchedule,
    cfg: &RunConfig,
    schedule: &TimestepSchedule,
    depth: usize,
    count: usize,
) -> Result<EvalResult<E>> {
    if count > cfg.data_val_count {
        return Err(Error::Config(format!(
            "evaluation wants {count} items but the validation split has {}",
            cfg.data_val_count
        )));
    }
    let ref_schedule = uniform_schedule(cfg.eval_n_ref, cfg.t_total - 1)?;
    let d_max = model.config.d_max();
    let noise_seed = cfg.seed_noise();
    let results: Vec<Result<(EvalRow, [Vec<E>; 4], u64)>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let (cond_m, target_m) = val_pair::<E>(cfg, i)?;
            let xt_seed = rng::derive(noise_seed, &format!("eval/{i}"));
            let spec = SamplerSpec { eta: 0.0, guidance: 1.0, noise_seed: xt_seed };
            let mut stats = SampleStats::default();
            let depths = vec![depth; schedule.len()];
            let out =
                ddim_sample(model, noise, &cond_m, schedule, &spec, Some(&depths), &mut stats)?;
            let ref_depths = vec![d_max; ref_schedule.len()];
            let reference = ddim_sample(
                model,
                noise,
                &cond_m,
                &ref_schedule,
                &spec,
                Some(&ref_depths),
                &mut stats,
            )?;
            let out_u = to_unit_range(&out);
            let ref_u = to_unit_range(&reference);
            let target_u = to_unit_range(&target_m);
            let cond_u = to_unit_range(&cond_m);
            let m_ref = mse(&out_u, &ref_u)?;
            let m_tgt = mse(&out_u, &target_u)?;
            let row = EvalRow {
                index: i,
                mse_ref: m_ref,
                psnr_ref: psnr_db(m_ref),
                mse_target: m_tgt,
                psnr_target: psnr_db(m_tgt),
            };
            Ok((row, [cond_u, out_u, target_u, ref_u], stats.model_calls))
        })
        .collect();
    let mut rows = Vec::with_capacity(count);
    let mut images = Vec::with_capacity(count);
    let mut calls = 0;
    for r in results {
        let (row, imgs, c) = r?;
        rows.push(row);
        images.push(imgs);
        calls += c;
    }
    Ok(EvalResult { rows, sampler_calls: calls, images })
}
