//! Orchestration: dataset access, phase runners binding trained models to
//! the search procedures, checkpoint persistence, and run manifests.
//!
//! A run directory is written by the CLI subcommands; nothing here is ever
//! overwritten without `--force`, and persisted manifests contain no
//! wall-clock so reruns under one seed are byte-identical.

pub mod checkpoint;
pub mod config;
pub mod evaluate;
pub mod io;
pub mod report;
pub mod train;

use rand::Rng;
use rayon::prelude::*;

use crate::denoiser::DenoiserModel;
use crate::diffusion::{ddim_sample, NoiseSchedule, SamplerSpec, SampleStats};
use crate::error::{Error, Result};
use crate::numerics::Real;
use crate::rng;
use crate::schedule::{uniform_schedule, TimestepSchedule};
use crate::search::{
    depth_search, multi_depth_enumerate, pareto_report, ts_optimize, BaselineComparison,
    DepthSearchConfig, DepthSearchOutcome, DiffusionDepthProber, DiffusionGammaSampler,
    DiffusionMultiDepthProber, MultiDepthConfig, MultiDepthRow, TsSearchConfig, TsSearchOutcome,
};
use crate::tasks::{mse, psnr_db, to_unit_range};

use config::RunConfig;
pub use train::{finetune_model, train_model, TrainLog};

/// Stable build identifier placed in manifests.
pub fn build_id() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

/// Fresh model from the config's architecture and init seed.
pub fn build_model<E: Real>(cfg: &RunConfig) -> Result<DenoiserModel<E>> {
    DenoiserModel::build(cfg.unet(), cfg.seed_init())
}

/// Distinct training-item indices for a search batch, drawn from the data
/// stream under `label`.
pub fn search_items(cfg: &RunConfig, label: &str, count: usize) -> Result<Vec<usize>> {
    if count > cfg.data_train_count {
        return Err(Error::Config(format!(
            "search batch {count} exceeds the training split of {}",
            cfg.data_train_count
        )));
    }
    let mut r = rng::stream(cfg.seed_data(), label);
    let mut seen = std::collections::HashSet::new();
    let mut items = Vec::with_capacity(count);
    while items.len() < count {
        let idx = r.random_range(0..cfg.data_train_count);
        if seen.insert(idx) {
            items.push(idx);
        }
    }
    Ok(items)
}

fn search_batch<E: Real>(
    cfg: &RunConfig,
    label: &str,
    count: usize,
) -> Result<(Vec<Vec<E>>, Vec<u64>)> {
    let items = search_items(cfg, label, count)?;
    let mut conds = Vec::with_capacity(count);
    let mut seeds = Vec::with_capacity(count);
    for (i, idx) in items.iter().enumerate() {
        let (cond, _) = train::train_pair::<E>(cfg, *idx)?;
        conds.push(cond);
        seeds.push(rng::derive(cfg.seed_noise(), &format!("{label}/xT/{i}")));
    }
    Ok((conds, seeds))
}

fn ts_config(cfg: &RunConfig, guidance: f64) -> TsSearchConfig {
    TsSearchConfig {
        n: cfg.ts_n,
        n_ref: cfg.ts_n_ref,
        eta_step: cfg.ts_eta_step,
        eps_probe: cfg.ts_eps_probe,
        batch: cfg.ts_batch,
        direction_mode: cfg.ts_mode,
        refine: cfg.ts_refine,
        alpha: cfg.ts_alpha(),
        t_max: cfg.t_total - 1,
        guidance,
        eta_ddim: cfg.ts_eta,
    }
}

/// Time-step search over a trained model at one guidance scale.
pub fn run_ts_search<E: Real>(
    model: &DenoiserModel<E>,
    noise: &NoiseSchedule,
    cfg: &RunConfig,
    guidance: f64,
) -> Result<TsSearchOutcome> {
    let ts_cfg = ts_config(cfg, guidance);
    let (conds, seeds) = search_batch::<E>(cfg, "tssearch", ts_cfg.batch)?;
    let mut sampler = DiffusionGammaSampler::new(model, noise, conds, seeds, ts_cfg.clone())?;
    let mut outcome = ts_optimize(&mut sampler, &ts_cfg)?;
    outcome.report.seeds = vec![cfg.seed, cfg.seed_data(), cfg.seed_noise()];
    if outcome.report.sampler_calls != outcome.report.expected_calls {
        return Err(Error::Search(format!(
            "sampler invocation accounting drifted: {} instrumented vs {} analytic",
            outcome.report.sampler_calls, outcome.report.expected_calls
        )));
    }
    Ok(outcome)
}

pub struct DepthSearchRun {
    pub outcome: DepthSearchOutcome,
    pub threshold: f64,
    /// Self-PSNR floor the auto threshold was derived from, when used.
    pub floor: Option<f64>,
}

fn batch_sample<E: Real>(
    model: &DenoiserModel<E>,
    noise: &NoiseSchedule,
    conds: &[Vec<E>],
    seeds: &[u64],
    schedule: &TimestepSchedule,
    depth: usize,
) -> Result<Vec<Vec<E>>> {
    let depths = vec![depth; schedule.len()];
    let results: Vec<Result<Vec<E>>> = conds
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(cond, &seed)| {
            let mut stats = SampleStats::default();
            let spec = SamplerSpec { eta: 0.0, guidance: 1.0, noise_seed: seed };
            let out = ddim_sample(model, noise, cond, schedule, &spec, Some(&depths), &mut stats)?;
            Ok(to_unit_range(&out))
        })
        .collect();
    results.into_iter().collect()
}

/// Depth search over a trained model. With an `auto` threshold, the quality
/// bar is the model's own output variability: mean PSNR between full-depth
/// reference runs under two disjoint noise streams, minus the configured
/// margin.
pub fn run_depth_search<E: Real>(
    model: &DenoiserModel<E>,
    noise: &NoiseSchedule,
    cfg: &RunConfig,
) -> Result<DepthSearchRun> {
    let d_max = model.config.d_max();
    let (conds, seeds) = search_batch::<E>(cfg, "depthsearch", cfg.depth_batch)?;
    let (threshold, floor) = if cfg.depth_threshold.is_nan() {
        let sched = uniform_schedule(cfg.depth_n_ref, cfg.t_total - 1)?;
        let alt_seeds: Vec<u64> = (0..cfg.depth_batch)
            .map(|i| rng::derive(cfg.seed_noise(), &format!("depthsearch/alt/{i}")))
            .collect();
        let a = batch_sample(model, noise, &conds, &seeds, &sched, d_max)?;
        let b = batch_sample(model, noise, &conds, &alt_seeds, &sched, d_max)?;
        let mut acc = 0.0;
        for (x, y) in a.iter().zip(&b) {
            acc += psnr_db(mse(x, y)?);
        }
        let floor = acc / a.len() as f64;
        (floor - cfg.depth_margin_db, Some(floor))
    } else {
        (cfg.depth_threshold, None)
    };
    let mut prober = DiffusionDepthProber::new(
        model,
        noise,
        conds,
        seeds,
        d_max,
        cfg.depth_n_ref,
        cfg.t_total - 1,
        1.0,
    );
    let ds_cfg = DepthSearchConfig {
        d_max,
        threshold,
        batch: cfg.depth_batch,
        n_ref: cfg.depth_n_ref,
    };
    let mut outcome = depth_search(&mut prober, &ds_cfg)?;
    outcome.report.seeds = vec![cfg.seed, cfg.seed_data(), cfg.seed_noise()];
    if let Some(f) = floor {
        outcome.report.extra.push(("self_psnr_floor".to_string(), f.to_string()));
    }
    if outcome.report.sampler_calls != outcome.report.expected_calls {
        return Err(Error::Search(format!(
            "sampler invocation accounting drifted: {} instrumented vs {} analytic",
            outcome.report.sampler_calls, outcome.report.expected_calls
        )));
    }
    Ok(DepthSearchRun { outcome, threshold, floor })
}

pub struct MultiDepthRun {
    pub rows: Vec<MultiDepthRow>,
    pub comparisons: Vec<BaselineComparison>,
    pub sampler_calls: u64,
}

pub fn run_multi_depth<E: Real>(
    model: &DenoiserModel<E>,
    noise: &NoiseSchedule,
    cfg: &RunConfig,
) -> Result<MultiDepthRun> {
    let md_cfg = MultiDepthConfig {
        depths: cfg.multi_depths.clone(),
        n: cfg.multi_n,
        group: cfg.multi_group,
        guard: cfg.multi_guard,
    };
    md_cfg.validate()?;
    let (conds, seeds) = search_batch::<E>(cfg, "multidepth", cfg.multi_batch)?;
    let unet = model.config.clone();
    let mut prober = DiffusionMultiDepthProber::new(
        model,
        noise,
        &unet,
        conds,
        seeds,
        cfg.multi_n,
        cfg.t_total - 1,
        1.0,
    );
    let rows = multi_depth_enumerate(&mut prober, &md_cfg)?;
    let comparisons = pareto_report(&rows, 0.2, 0.01);
    Ok(MultiDepthRun { rows, comparisons, sampler_calls: prober.calls })
}

/// CSV schema: `group_depths,psnr,param_proxy,mac_proxy` with depths joined
/// by `|` inside the first column.
pub fn multi_depth_csv(rows: &[MultiDepthRow]) -> String {
    let mut s = String::from("group_depths,psnr,param_proxy,mac_proxy\n");
    for r in rows {
        let depths: Vec<String> = r.group_depths.iter().map(|d| d.to_string()).collect();
        s.push_str(&format!("{},{},{},{}\n", depths.join("|"), r.psnr, r.param_proxy, r.mac_proxy));
    }
    s
}

/// Dataset manifest: every scene seed by split. CSV schema:
/// `split,index,scene_seed`.
pub fn dataset_manifest(cfg: &RunConfig) -> String {
    let mut s = String::from("split,index,scene_seed\n");
    for i in 0..cfg.data_train_count {
        s.push_str(&format!("train,{i},{i}\n"));
    }
    for i in 0..cfg.data_val_count {
        s.push_str(&format!("val,{i},{}\n", cfg.data_train_count + i));
    }
    s
}
