//! Training and fine-tuning loops. Batches fan out across threads at whole-
//! sample granularity with per-sample noise streams; gradient reduction runs
//! in parameter-table order so results are independent of scheduling.

use rand::Rng;
use rayon::prelude::*;

use crate::denoiser::{DenoiserModel, GradMap};
use crate::diffusion::{training_loss, NoiseSchedule};
use crate::error::{Error, Result};
use crate::numerics::{AdamConfig, AdamState, Real};
use crate::rng;
use crate::tasks::{make_pair, to_model_range, TaskKind};

use super::config::RunConfig;

#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    /// `(step, mean loss over the window ending at step)` rows.
    pub entries: Vec<(usize, f64)>,
    pub first_window_mean: f64,
    pub last_window_mean: f64,
    pub steps: usize,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,mean_loss\n");
        for (step, loss) in &self.entries {
            s.push_str(&format!("{step},{loss}\n"));
        }
        s
    }
}

/// The `(condition, target)` pair for training item `idx` (scene seeds are
/// the item indices themselves; validation continues the range).
pub fn train_pair<E: Real>(cfg: &RunConfig, idx: usize) -> Result<(Vec<E>, Vec<E>)> {
    pair_in_model_range(cfg.task, idx as u64, cfg.image_size, cfg.channels)
}

pub fn val_pair<E: Real>(cfg: &RunConfig, i: usize) -> Result<(Vec<E>, Vec<E>)> {
    pair_in_model_range(
        cfg.task,
        (cfg.data_train_count + i) as u64,
        cfg.image_size,
        cfg.channels,
    )
}

fn pair_in_model_range<E: Real>(
    task: TaskKind,
    scene_seed: u64,
    image_size: usize,
    channels: usize,
) -> Result<(Vec<E>, Vec<E>)> {
    let pair = make_pair::<E>(task, scene_seed, image_size, channels)?;
    Ok((to_model_range(&pair.cond), to_model_range(&pair.target)))
}

struct LoopSettings {
    steps: usize,
    lr: f64,
    order_label: String,
    noise_label: String,
}

/// One optimization run over the noise-prediction loss. Only parameters at
/// depths within the model's active depth are bound, receive gradients, and
/// are tracked by the optimizer.
fn run_loop<E: Real>(
    model: &mut DenoiserModel<E>,
    noise: &NoiseSchedule,
    cfg: &RunConfig,
    set: &LoopSettings,
) -> Result<TrainLog> {
    let tracked: Vec<(String, usize)> = model
        .params
        .iter()
        .filter(|(_, p)| p.depth <= model.active_depth && p.tensor.requires_grad)
        .map(|(n, p)| (n.clone(), p.tensor.numel()))
        .collect();
    let mut opt = AdamState::<E>::new(AdamConfig { lr: set.lr, ..AdamConfig::default() }, tracked);
    let mut order_rng = rng::stream(cfg.seed_data(), &set.order_label);
    let noise_seed = cfg.seed_noise();
    let mut log = TrainLog::default();
    let mut window: Vec<f64> = Vec::with_capacity(cfg.train_log_every);
    let mut first_window = None;
    for step in 0..set.steps {
        let indices: Vec<usize> =
            (0..cfg.train_batch).map(|_| order_rng.random_range(0..cfg.data_train_count)).collect();
        let samples: Vec<Result<(f64, GradMap<E>)>> = indices
            .par_iter()
            .enumerate()
            .map(|(slot, &idx)| {
                let (cond, target) = train_pair::<E>(cfg, idx)?;
                let sample_seed =
                    rng::derive(noise_seed, &format!("{}/s{step}.i{slot}", set.noise_label));
                training_loss(model, noise, &target, &cond, sample_seed, cfg.train_p_drop)
            })
            .collect();
        let mut grad_maps = Vec::with_capacity(samples.len());
        let mut loss_sum = 0.0;
        for s in samples {
            let (loss, grads) = s.map_err(|e| {
                Error::Numeric(format!("training aborted at step {step}: {e}"))
            })?;
            loss_sum += loss;
            grad_maps.push(grads);
        }
        let mean_loss = loss_sum / cfg.train_batch as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at step {step}")));
        }
        // reduce in parameter-table order, then scale by the batch size
        let scale = E::of_f64(1.0 / cfg.train_batch as f64);
        let names: Vec<String> = model.params.keys().cloned().collect();
        for name in &names {
            let mut acc: Option<Vec<E>> = None;
            for g in &grad_maps {
                if let Some(gv) = g.get(name) {
                    match &mut acc {
                        Some(a) => {
                            for (x, y) in a.iter_mut().zip(gv) {
                                *x = *x + *y;
                            }
                        }
                        None => acc = Some(gv.clone()),
                    }
                }
            }
            if let Some(mut a) = acc {
                for v in a.iter_mut() {
                    *v = *v * scale;
                }
                model.params.get_mut(name).unwrap().tensor.accumulate_grad(&a);
            }
        }
        let ctx = opt.step_begin();
        for (name, param) in model.params.iter_mut() {
            if !opt.tracks(name) {
                continue;
            }
            let grad = param.tensor.grad.take();
            opt.update_param(ctx, name, param.tensor.data_mut(), grad.as_deref())?;
        }
        model.zero_grads();
        window.push(mean_loss);
        if window.len() == cfg.train_log_every || step + 1 == set.steps {
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            log.entries.push((step + 1, mean));
            if first_window.is_none() {
                first_window = Some(mean);
            }
            log.last_window_mean = mean;
            window.clear();
        }
    }
    log.first_window_mean = first_window.unwrap_or(0.0);
    log.steps = set.steps;
    Ok(log)
}

/// Train from the model's current parameters for `cfg.train_steps` steps.
pub fn train_model<E: Real>(
    model: &mut DenoiserModel<E>,
    noise: &NoiseSchedule,
    cfg: &RunConfig,
) -> Result<TrainLog> {
    run_loop(
        model,
        noise,
        cfg,
        &LoopSettings {
            steps: cfg.train_steps,
            lr: cfg.train_lr,
            order_label: "order".to_string(),
            noise_label: "train".to_string(),
        },
    )
}

/// Fine-tune a pruned model at `d_star`: lower learning rate, reduced step
/// budget, deeper parameters frozen out of the optimizer. `d_star = d_max`
/// is a warned no-op.
pub fn finetune_model<E: Real>(
    model: &mut DenoiserModel<E>,
    noise: &NoiseSchedule,
    cfg: &RunConfig,
    d_star: usize,
) -> Result<(TrainLog, Option<String>)> {
    if d_star == model.config.d_max() {
        return Ok((
            TrainLog::default(),
            Some("fine-tune at d_max is a no-op; nothing is pruned".to_string()),
        ));
    }
    model.set_active_depth(d_star)?;
    let log = run_loop(
        model,
        noise,
        cfg,
        &LoopSettings {
            steps: cfg.finetune_budget(),
            lr: cfg.train_lr * cfg.finetune_lr_scale,
            order_label: "ft-order".to_string(),
            noise_label: "finetune".to_string(),
        },
    )?;
    Ok((log, None))
}
