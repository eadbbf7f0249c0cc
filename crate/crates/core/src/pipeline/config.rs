//! Flat `key = value` run configuration. UTF-8, `#` comments, dotted names
//! for nesting. Every key has a default; unknown keys are an error so typos
//! never pass silently.

use std::collections::BTreeMap;
use std::path::Path;

use crate::denoiser::UNetConfig;
use crate::error::{Error, Result};
use crate::rng;
use crate::search::DirectionMode;
use crate::tasks::TaskKind;

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub task: TaskKind,
    pub image_size: usize,
    pub channels: usize,
    pub seed: u64,
    seed_data: Option<u64>,
    seed_init: Option<u64>,
    seed_noise: Option<u64>,
    pub t_total: usize,
    pub base_channels: usize,
    pub channel_mults: Vec<usize>,
    pub blocks_per_level: usize,
    pub time_embed_dim: usize,
    pub train_steps: usize,
    pub train_batch: usize,
    pub train_lr: f64,
    pub train_p_drop: f64,
    pub train_log_every: usize,
    pub data_train_count: usize,
    pub data_val_count: usize,
    /// 0 means the default budget of train_steps / 4.
    pub finetune_steps: usize,
    pub finetune_lr_scale: f64,
    pub eval_count: usize,
    pub eval_n_ref: usize,
    pub ts_n: usize,
    pub ts_n_ref: usize,
    pub ts_eta_step: f64,
    pub ts_eps_probe: f64,
    pub ts_batch: usize,
    pub ts_refine: bool,
    pub ts_mode: DirectionMode,
    pub ts_alpha_frac: f64,
    pub ts_guidance: Vec<f64>,
    pub ts_eta: f64,
    pub depth_batch: usize,
    pub depth_n_ref: usize,
    /// NaN means derive the threshold from the per-run self-PSNR floor.
    pub depth_threshold: f64,
    pub depth_margin_db: f64,
    pub multi_depths: Vec<usize>,
    pub multi_n: usize,
    pub multi_group: usize,
    pub multi_batch: usize,
    pub multi_guard: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: TaskKind::Restore,
            image_size: 16,
            channels: 1,
            seed: 42,
            seed_data: None,
            seed_init: None,
            seed_noise: None,
            t_total: 1000,
            base_channels: 8,
            channel_mults: vec![1, 2, 4, 8],
            blocks_per_level: 2,
            time_embed_dim: 32,
            train_steps: 2000,
            train_batch: 8,
            train_lr: 1e-3,
            train_p_drop: 0.1,
            train_log_every: 100,
            data_train_count: 2048,
            data_val_count: 512,
            finetune_steps: 0,
            finetune_lr_scale: 0.3,
            eval_count: 200,
            eval_n_ref: 50,
            ts_n: 5,
            ts_n_ref: 50,
            ts_eta_step: 0.05,
            ts_eps_probe: 0.1,
            ts_batch: 64,
            ts_refine: false,
            ts_mode: DirectionMode::Reference,
            ts_alpha_frac: 0.03,
            ts_guidance: vec![1.0],
            ts_eta: 0.0,
            depth_batch: 32,
            depth_n_ref: 50,
            depth_threshold: f64::NAN,
            depth_margin_db: 2.0,
            multi_depths: vec![7, 8, 9],
            multi_n: 6,
            multi_group: 2,
            multi_batch: 16,
            multi_guard: 10_000,
        }
    }
}

impl RunConfig {
    pub fn seed_data(&self) -> u64 {
        self.seed_data.unwrap_or_else(|| rng::derive(self.seed, "data"))
    }

    pub fn seed_init(&self) -> u64 {
        self.seed_init.unwrap_or_else(|| rng::derive(self.seed, "init"))
    }

    pub fn seed_noise(&self) -> u64 {
        self.seed_noise.unwrap_or_else(|| rng::derive(self.seed, "noise"))
    }

    /// `--seed` replaces the master seed and clears per-stream overrides so
    /// every derived stream moves together.
    pub fn override_master_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.seed_data = None;
        self.seed_init = None;
        self.seed_noise = None;
    }

    pub fn cond_channels(&self) -> usize {
        self.task.cond_channels(self.channels)
    }

    pub fn unet(&self) -> UNetConfig {
        UNetConfig {
            image_size: self.image_size,
            in_channels: self.channels,
            cond_channels: self.cond_channels(),
            out_channels: self.channels,
            base_channels: self.base_channels,
            channel_mults: self.channel_mults.clone(),
            blocks_per_level: self.blocks_per_level,
            time_embed_dim: self.time_embed_dim,
        }
    }

    pub fn ts_alpha(&self) -> f64 {
        self.ts_alpha_frac * self.t_total as f64
    }

    pub fn finetune_budget(&self) -> usize {
        if self.finetune_steps > 0 {
            self.finetune_steps
        } else {
            self.train_steps / 4
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::Config(format!("channels must be 1 or 3, got {}", self.channels)));
        }
        if self.image_size % 4 != 0 {
            return Err(Error::Config("image_size must be divisible by 4 for the restore task".to_string()));
        }
        self.unet().validate()?;
        if self.t_total < 2 {
            return Err(Error::Config("t_total must be at least 2".to_string()));
        }
        if self.data_train_count == 0 || self.train_batch == 0 {
            return Err(Error::Config("train counts must be positive".to_string()));
        }
        if !(0.0..=1.0).contains(&self.train_p_drop) {
            return Err(Error::Config("train.p_drop must be in [0,1]".to_string()));
        }
        Ok(())
    }

    /// Render the resolved configuration as `key = value` lines (the config
    /// echo placed in manifests).
    pub fn echo(&self) -> String {
        let mults: Vec<String> = self.channel_mults.iter().map(|m| m.to_string()).collect();
        let depths: Vec<String> = self.multi_depths.iter().map(|d| d.to_string()).collect();
        let guidance: Vec<String> = self.ts_guidance.iter().map(|g| g.to_string()).collect();
        let mode = match self.ts_mode {
            DirectionMode::Reference => "reference",
            DirectionMode::UniformLiteral => "uniform-literal",
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("task", self.task.name().to_string());
        kv("image_size", self.image_size.to_string());
        kv("channels", self.channels.to_string());
        kv("seed", self.seed.to_string());
        kv("seed.data", self.seed_data().to_string());
        kv("seed.init", self.seed_init().to_string());
        kv("seed.noise", self.seed_noise().to_string());
        kv("t_total", self.t_total.to_string());
        kv("unet.base_channels", self.base_channels.to_string());
        kv("unet.channel_mults", mults.join(","));
        kv("unet.blocks_per_level", self.blocks_per_level.to_string());
        kv("unet.time_embed_dim", self.time_embed_dim.to_string());
        kv("train.steps", self.train_steps.to_string());
        kv("train.batch", self.train_batch.to_string());
        kv("train.lr", self.train_lr.to_string());
        kv("train.p_drop", self.train_p_drop.to_string());
        kv("train.log_every", self.train_log_every.to_string());
        kv("data.train_count", self.data_train_count.to_string());
        kv("data.val_count", self.data_val_count.to_string());
        kv("finetune.steps", self.finetune_budget().to_string());
        kv("finetune.lr_scale", self.finetune_lr_scale.to_string());
        kv("eval.count", self.eval_count.to_string());
        kv("eval.n_ref", self.eval_n_ref.to_string());
        kv("search.ts.n", self.ts_n.to_string());
        kv("search.ts.n_ref", self.ts_n_ref.to_string());
        kv("search.ts.eta_step", self.ts_eta_step.to_string());
        kv("search.ts.eps_probe", self.ts_eps_probe.to_string());
        kv("search.ts.batch", self.ts_batch.to_string());
        kv("search.ts.refine", self.ts_refine.to_string());
        kv("search.ts.mode", mode.to_string());
        kv("search.ts.alpha_frac", self.ts_alpha_frac.to_string());
        kv("search.ts.guidance", guidance.join(","));
        kv("search.ts.eta", self.ts_eta.to_string());
        kv("search.depth.batch", self.depth_batch.to_string());
        kv("search.depth.n_ref", self.depth_n_ref.to_string());
        kv(
            "search.depth.threshold",
            if self.depth_threshold.is_nan() { "auto".to_string() } else { self.depth_threshold.to_string() },
        );
        kv("search.depth.margin_db", self.depth_margin_db.to_string());
        kv("multi.depths", depths.join(","));
        kv("multi.n", self.multi_n.to_string());
        kv("multi.group", self.multi_group.to_string());
        kv("multi.batch", self.multi_batch.to_string());
        kv("multi.guard", self.multi_guard.to_string());
        s
    }
}

fn parse_kv_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected key = value, got {raw:?}", lineno + 1)));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| Error::Config(format!("{key}: bad element {p:?}"))))
        .collect()
}

fn apply(cfg: &mut RunConfig, key: &str, v: &str) -> Result<()> {
    fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
        v.parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
    }
    match key {
        "task" => {
            cfg.task = match v {
                "restore" => TaskKind::Restore,
                "structgen" => TaskKind::StructGen,
                _ => return Err(Error::Config(format!("task: unknown kind {v:?}"))),
            }
        }
        "image_size" => cfg.image_size = num(key, v)?,
        "channels" => cfg.channels = num(key, v)?,
        "seed" => cfg.seed = num(key, v)?,
        "seed.data" => cfg.seed_data = Some(num(key, v)?),
        "seed.init" => cfg.seed_init = Some(num(key, v)?),
        "seed.noise" => cfg.seed_noise = Some(num(key, v)?),
        "t_total" => cfg.t_total = num(key, v)?,
        "unet.base_channels" => cfg.base_channels = num(key, v)?,
        "unet.channel_mults" => cfg.channel_mults = parse_list(key, v)?,
        "unet.blocks_per_level" => cfg.blocks_per_level = num(key, v)?,
        "unet.time_embed_dim" => cfg.time_embed_dim = num(key, v)?,
        "train.steps" => cfg.train_steps = num(key, v)?,
        "train.batch" => cfg.train_batch = num(key, v)?,
        "train.lr" => cfg.train_lr = num(key, v)?,
        "train.p_drop" => cfg.train_p_drop = num(key, v)?,
        "train.log_every" => cfg.train_log_every = num(key, v)?,
        "data.train_count" => cfg.data_train_count = num(key, v)?,
        "data.val_count" => cfg.data_val_count = num(key, v)?,
        "finetune.steps" => cfg.finetune_steps = num(key, v)?,
        "finetune.lr_scale" => cfg.finetune_lr_scale = num(key, v)?,
        "eval.count" => cfg.eval_count = num(key, v)?,
        "eval.n_ref" => cfg.eval_n_ref = num(key, v)?,
        "search.ts.n" => cfg.ts_n = num(key, v)?,
        "search.ts.n_ref" => cfg.ts_n_ref = num(key, v)?,
        "search.ts.eta_step" => cfg.ts_eta_step = num(key, v)?,
        "search.ts.eps_probe" => cfg.ts_eps_probe = num(key, v)?,
        "search.ts.batch" => cfg.ts_batch = num(key, v)?,
        "search.ts.refine" => cfg.ts_refine = num(key, v)?,
        "search.ts.mode" => {
            cfg.ts_mode = match v {
                "reference" => DirectionMode::Reference,
                "uniform-literal" => DirectionMode::UniformLiteral,
                _ => return Err(Error::Config(format!("search.ts.mode: unknown mode {v:?}"))),
            }
        }
        "search.ts.alpha_frac" => cfg.ts_alpha_frac = num(key, v)?,
        "search.ts.guidance" => cfg.ts_guidance = parse_list(key, v)?,
        "search.ts.eta" => cfg.ts_eta = num(key, v)?,
        "search.depth.batch" => cfg.depth_batch = num(key, v)?,
        "search.depth.n_ref" => cfg.depth_n_ref = num(key, v)?,
        "search.depth.threshold" => {
            cfg.depth_threshold = if v == "auto" { f64::NAN } else { num(key, v)? }
        }
        "search.depth.margin_db" => cfg.depth_margin_db = num(key, v)?,
        "multi.depths" => cfg.multi_depths = parse_list(key, v)?,
        "multi.n" => cfg.multi_n = num(key, v)?,
        "multi.group" => cfg.multi_group = num(key, v)?,
        "multi.batch" => cfg.multi_batch = num(key, v)?,
        "multi.guard" => cfg.multi_guard = num(key, v)?,
        _ => return Err(Error::Config(format!("unknown key {key:?}"))),
    }
    Ok(())
}

/// Parse config text and apply `--set key=value` overrides on top.
pub fn load_config(text: &str, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (k, v) in parse_kv_text(text)? {
        apply(&mut cfg, &k, &v)?;
    }
    for (k, v) in overrides {
        apply(&mut cfg, k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config_file(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    load_config(&text, overrides)
}
