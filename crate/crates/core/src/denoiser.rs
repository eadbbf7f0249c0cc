//! Conditional U-Net noise predictor with indexed skip-connection depth
//! levels and a depth-skip execution mode.
//!
//! Depth levels count 1..=d_max from shallowest to deepest. Each encoder
//! block owns one skip connection and one depth level; the mirrored decoder
//! block belongs to the same level, the middle block to level d_max. The
//! resampling convs between resolution levels belong to the first depth of
//! the deeper level. With `active_depth = d < d_max`, everything beyond depth
//! d is bypassed and the decoder at d receives the level-d skip tensor
//! duplicated along channels in place of the missing deeper features.
//!
//! Parameter names are the checkpoint contract (see `layout`): stable strings
//! like `enc.L2.B1.conv1.weight`.

use std::collections::HashMap;
use std::fmt::Write as _;

use indexmap::IndexMap;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Gradients, Real, Tape, Tensor, Var};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UNetConfig {
    /// Pixels per side, a power of two.
    pub image_size: usize,
    pub in_channels: usize,
    pub cond_channels: usize,
    pub out_channels: usize,
    pub base_channels: usize,
    /// Channel multiplier per resolution level.
    pub channel_mults: Vec<usize>,
    pub blocks_per_level: usize,
    pub time_embed_dim: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            image_size: 32,
            in_channels: 3,
            cond_channels: 3,
            out_channels: 3,
            base_channels: 8,
            channel_mults: vec![1, 2, 4, 8],
            blocks_per_level: 2,
            time_embed_dim: 32,
        }
    }
}

impl UNetConfig {
    pub fn levels(&self) -> usize {
        self.channel_mults.len()
    }

    /// Depth levels: one per encoder block plus the middle block.
    pub fn d_max(&self) -> usize {
        self.blocks_per_level * self.levels() + 1
    }

    pub fn channels_at(&self, level: usize) -> usize {
        self.base_channels * self.channel_mults[level - 1]
    }

    /// Spatial side at a resolution level (level 1 = full resolution).
    pub fn side_at(&self, level: usize) -> usize {
        self.image_size >> (level - 1)
    }

    /// `(level, block)` owning a non-middle depth index.
    pub fn level_block(&self, depth: usize) -> (usize, usize) {
        debug_assert!(depth >= 1 && depth <= self.blocks_per_level * self.levels());
        ((depth - 1) / self.blocks_per_level + 1, (depth - 1) % self.blocks_per_level + 1)
    }

    pub fn depth_of(&self, level: usize, block: usize) -> usize {
        (level - 1) * self.blocks_per_level + block
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size < 2 || !self.image_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "image_size must be a power of two >= 2, got {}",
                self.image_size
            )));
        }
        if self.channel_mults.is_empty() {
            return Err(Error::Config("channel_mults must be non-empty".to_string()));
        }
        let max_levels = self.image_size.trailing_zeros() as usize;
        if self.levels() > max_levels {
            return Err(Error::Config(format!(
                "{} resolution levels exceed log2(image_size) = {max_levels}",
                self.levels()
            )));
        }
        for v in [self.in_channels, self.cond_channels, self.out_channels, self.base_channels, self.blocks_per_level]
        {
            if v == 0 {
                return Err(Error::Config("channel and block counts must be positive".to_string()));
            }
        }
        if self.time_embed_dim < 4 || self.time_embed_dim % 2 != 0 {
            return Err(Error::Config(format!(
                "time_embed_dim must be even and >= 4, got {}",
                self.time_embed_dim
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
enum Init {
    FanIn(usize),
    Zero,
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    depth: usize,
    init: Init,
}

fn conv_spec(name: &str, co: usize, ci: usize, k: usize, depth: usize, zero: bool) -> [ParamSpec; 2] {
    let init = if zero { Init::Zero } else { Init::FanIn(ci * k * k) };
    [
        ParamSpec { name: format!("{name}.weight"), shape: vec![co, ci, k, k], depth, init },
        ParamSpec { name: format!("{name}.bias"), shape: vec![co], depth, init: Init::Zero },
    ]
}

fn affine_spec(name: &str, n_out: usize, n_in: usize, depth: usize) -> [ParamSpec; 2] {
    [
        ParamSpec {
            name: format!("{name}.weight"),
            shape: vec![n_out, n_in],
            depth,
            init: Init::FanIn(n_in),
        },
        ParamSpec { name: format!("{name}.bias"), shape: vec![n_out], depth, init: Init::Zero },
    ]
}

/// The full parameter layout: the set of names is a pure function of config.
fn layout(cfg: &UNetConfig) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    let te = cfg.time_embed_dim;
    let c1 = cfg.channels_at(1);
    specs.extend(conv_spec("stem.conv", c1, cfg.in_channels + cfg.cond_channels, 3, 1, false));
    specs.extend(affine_spec("temb.fc1", te, te, 1));
    specs.extend(affine_spec("temb.fc2", te, te, 1));
    for l in 1..=cfg.levels() {
        let c = cfg.channels_at(l);
        if l > 1 {
            let d = cfg.depth_of(l, 1);
            specs.extend(conv_spec(&format!("down.L{l}.conv"), c, cfg.channels_at(l - 1), 3, d, false));
        }
        for b in 1..=cfg.blocks_per_level {
            let d = cfg.depth_of(l, b);
            let p = format!("enc.L{l}.B{b}");
            specs.extend(conv_spec(&format!("{p}.conv1"), c, c, 3, d, false));
            specs.extend(affine_spec(&format!("{p}.temb"), c, te, d));
            specs.extend(conv_spec(&format!("{p}.conv2"), c, c, 3, d, false));
        }
    }
    let cl = cfg.channels_at(cfg.levels());
    let d_mid = cfg.d_max();
    specs.extend(conv_spec("mid.conv1", cl, cl, 3, d_mid, false));
    specs.extend(affine_spec("mid.temb", cl, te, d_mid));
    specs.extend(conv_spec("mid.conv2", cl, cl, 3, d_mid, false));
    for l in (1..=cfg.levels()).rev() {
        let c = cfg.channels_at(l);
        for b in (1..=cfg.blocks_per_level).rev() {
            let d = cfg.depth_of(l, b);
            let p = format!("dec.L{l}.B{b}");
            specs.extend(conv_spec(&format!("{p}.conv1"), c, 2 * c, 3, d, false));
            specs.extend(affine_spec(&format!("{p}.temb"), c, te, d));
            specs.extend(conv_spec(&format!("{p}.conv2"), c, c, 3, d, false));
            specs.extend(conv_spec(&format!("{p}.skip"), c, 2 * c, 1, d, false));
        }
        if l > 1 {
            let d = cfg.depth_of(l, 1);
            specs.extend(conv_spec(&format!("up.L{l}.conv"), cfg.channels_at(l - 1), c, 3, d, false));
        }
    }
    specs.extend(conv_spec("out.conv", cfg.out_channels, c1, 3, 1, true));
    specs
}

/// One named parameter and the depth level that owns it.
#[derive(Clone, Debug)]
pub struct Param<E> {
    pub tensor: Tensor<E>,
    pub depth: usize,
}

/// Named-tensor table in layout order.
pub type ParamTable<E> = IndexMap<String, Param<E>>;

/// Gradients keyed by parameter name.
pub type GradMap<E> = HashMap<String, Vec<E>>;

#[derive(Clone, Debug)]
pub struct DenoiserModel<E> {
    pub config: UNetConfig,
    pub params: ParamTable<E>,
    /// Depth-skip execution level, in `1..=d_max`.
    pub active_depth: usize,
}

impl<E: Real> DenoiserModel<E> {
    /// Deterministic build: fan-in-scaled uniform init for convolutions and
    /// affine maps, zero init for the output conv and all biases. Identical
    /// `(config, seed)` gives a bit-identical table.
    pub fn build(config: UNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamTable::new();
        for spec in layout(&config) {
            let numel: usize = spec.shape.iter().product();
            let data = match spec.init {
                Init::Zero => vec![E::zero(); numel],
                Init::FanIn(fan_in) => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    let mut r = rng::stream(seed, &format!("init/{}", spec.name));
                    (0..numel).map(|_| E::of_f64(r.random_range(-bound..bound))).collect()
                }
            };
            let mut tensor = Tensor::new(spec.shape, data)?;
            tensor.requires_grad = true;
            params.insert(spec.name, Param { tensor, depth: spec.depth });
        }
        let active_depth = config.d_max();
        Ok(DenoiserModel { config, params, active_depth })
    }

    pub fn set_active_depth(&mut self, depth: usize) -> Result<()> {
        if depth < 1 || depth > self.config.d_max() {
            return Err(Error::InvalidArg(format!(
                "active depth {depth} outside 1..={}",
                self.config.d_max()
            )));
        }
        self.active_depth = depth;
        Ok(())
    }

    pub fn param_count(&self) -> u64 {
        self.params.values().map(|p| p.tensor.numel() as u64).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.tensor.zero_grad();
        }
    }

    /// Forward pass at the model's active depth.
    pub fn forward(
        &self,
        tape: &mut Tape<E>,
        x: Var,
        cond: Var,
        t: usize,
        t_total: usize,
    ) -> Result<ForwardPass> {
        self.forward_at(tape, x, cond, t, t_total, self.active_depth)
    }

    /// Forward pass with an explicit depth override (used by multi-depth
    /// sampling). Never reads a parameter owned by a deeper level.
    pub fn forward_at(
        &self,
        tape: &mut Tape<E>,
        x: Var,
        cond: Var,
        t: usize,
        t_total: usize,
        depth: usize,
    ) -> Result<ForwardPass> {
        let cfg = &self.config;
        if depth < 1 || depth > cfg.d_max() {
            return Err(Error::InvalidArg(format!("depth {depth} outside 1..={}", cfg.d_max())));
        }
        if t >= t_total {
            return Err(Error::InvalidArg(format!("timestep {t} outside 0..{t_total}")));
        }
        let s = cfg.image_size;
        if tape.shape(x) != [cfg.in_channels, s, s] {
            return Err(Error::shape(
                "forward",
                format!("x shape {:?}, expected [{}, {s}, {s}]", tape.shape(x), cfg.in_channels),
            ));
        }
        if tape.shape(cond) != [cfg.cond_channels, s, s] {
            return Err(Error::shape(
                "forward",
                format!("cond shape {:?}, expected [{}, {s}, {s}]", tape.shape(cond), cfg.cond_channels),
            ));
        }
        let mut binder = Binder { model: self, bound: Vec::new(), index: HashMap::new(), max_depth: depth };

        // shared time features: sinusoid -> fc1 -> silu -> fc2
        let sin_feat = tape.leaf(vec![cfg.time_embed_dim], sinusoid_features(t, cfg.time_embed_dim), false)?;
        let t_feat = {
            let w1 = binder.get(tape, "temb.fc1.weight")?;
            let b1 = binder.get(tape, "temb.fc1.bias")?;
            let h = tape.affine(sin_feat, w1, b1)?;
            let h = tape.silu(h)?;
            let w2 = binder.get(tape, "temb.fc2.weight")?;
            let b2 = binder.get(tape, "temb.fc2.bias")?;
            tape.affine(h, w2, b2)?
        };

        let mut h = {
            let xin = tape.concat_ch(x, cond)?;
            let w = binder.get(tape, "stem.conv.weight")?;
            let b = binder.get(tape, "stem.conv.bias")?;
            tape.conv2d(xin, w, Some(b), 1)?
        };

        // encoder down to the active depth, collecting skips
        let mut skips: Vec<Var> = Vec::new();
        'enc: for l in 1..=cfg.levels() {
            if l > 1 {
                if cfg.depth_of(l, 1) > depth {
                    break 'enc;
                }
                let w = binder.get(tape, &format!("down.L{l}.conv.weight"))?;
                let b = binder.get(tape, &format!("down.L{l}.conv.bias"))?;
                h = tape.conv2d(h, w, Some(b), 2)?;
            }
            for b in 1..=cfg.blocks_per_level {
                if cfg.depth_of(l, b) > depth {
                    break 'enc;
                }
                h = res_block(tape, &mut binder, &format!("enc.L{l}.B{b}"), h, t_feat, false)?;
                skips.push(h);
            }
        }

        let max_skip_depth = cfg.blocks_per_level * cfg.levels();
        if depth == cfg.d_max() {
            h = res_block(tape, &mut binder, "mid", h, t_feat, false)?;
        } else {
            // bypass: duplicate the deepest collected skip along channels to
            // the width the decoder block expects (cyclic repeat + truncate)
            let deepest = *skips.last().expect("depth >= 1 always collects a skip");
            let want = tape.shape(deepest)[0];
            h = duplicate_channels(tape, deepest, want)?;
        }

        // decoder from the deepest collected skip back to full resolution
        for d in (1..=depth.min(max_skip_depth)).rev() {
            let (l, b) = cfg.level_block(d);
            let skip = skips[d - 1];
            let cat = tape.concat_ch(h, skip)?;
            h = res_block_cat(tape, &mut binder, &format!("dec.L{l}.B{b}"), cat, t_feat)?;
            if b == 1 && l > 1 {
                let up = tape.upsample2x(h)?;
                let w = binder.get(tape, &format!("up.L{l}.conv.weight"))?;
                let bb = binder.get(tape, &format!("up.L{l}.conv.bias"))?;
                h = tape.conv2d(up, w, Some(bb), 1)?;
            }
        }

        let out = {
            let act = tape.silu(h)?;
            let w = binder.get(tape, "out.conv.weight")?;
            let b = binder.get(tape, "out.conv.bias")?;
            tape.conv2d(act, w, Some(b), 1)?
        };
        Ok(ForwardPass { out, bound: binder.bound })
    }

    /// Forward-only evaluation on a throwaway inference tape.
    pub fn predict(
        &self,
        x: &[E],
        cond: &[E],
        t: usize,
        t_total: usize,
        depth: Option<usize>,
    ) -> Result<Vec<E>> {
        let cfg = &self.config;
        let s = cfg.image_size;
        let mut tape = Tape::inference();
        let xv = tape.leaf(vec![cfg.in_channels, s, s], x.to_vec(), false)?;
        let cv = tape.leaf(vec![cfg.cond_channels, s, s], cond.to_vec(), false)?;
        let pass = self.forward_at(&mut tape, xv, cv, t, t_total, depth.unwrap_or(self.active_depth))?;
        Ok(tape.value(pass.out).to_vec())
    }

    /// Per-depth parameter and analytic multiply-accumulate profile.
    pub fn depth_profile(&self) -> DepthProfile {
        depth_profile(&self.config)
    }
}

/// Sinusoidal features for an integer timestep: half sines, half cosines over
/// a geometric frequency ladder.
pub fn sinusoid_features<E: Real>(t: usize, dim: usize) -> Vec<E> {
    let half = dim / 2;
    let mut feat = vec![E::zero(); dim];
    for k in 0..half {
        let freq = (-(10_000.0f64.ln()) * k as f64 / (half - 1).max(1) as f64).exp();
        let arg = t as f64 * freq;
        feat[k] = E::of_f64(arg.sin());
        feat[half + k] = E::of_f64(arg.cos());
    }
    feat
}

/// Cyclic channel duplication then truncation to `target` channels.
fn duplicate_channels<E: Real>(tape: &mut Tape<E>, src: Var, target: usize) -> Result<Var> {
    let c = tape.shape(src)[0];
    if c == target {
        // a single full copy; concat+slice keeps this on the tape primitives
        let doubled = tape.concat_ch(src, src)?;
        return tape.slice_ch(doubled, 0, target);
    }
    let mut acc = src;
    while tape.shape(acc)[0] < target {
        acc = tape.concat_ch(acc, src)?;
    }
    tape.slice_ch(acc, 0, target)
}

struct Binder<'m, E> {
    model: &'m DenoiserModel<E>,
    bound: Vec<(String, Var)>,
    index: HashMap<String, usize>,
    max_depth: usize,
}

impl<E: Real> Binder<'_, E> {
    fn get(&mut self, tape: &mut Tape<E>, name: &str) -> Result<Var> {
        if let Some(&i) = self.index.get(name) {
            return Ok(self.bound[i].1);
        }
        let param = self
            .model
            .params
            .get(name)
            .ok_or_else(|| Error::InvalidArg(format!("unknown parameter {name}")))?;
        debug_assert!(
            param.depth <= self.max_depth,
            "read parameter {name} owned by depth {} while executing at depth {}",
            param.depth,
            self.max_depth
        );
        let var = tape.leaf(
            param.tensor.shape().to_vec(),
            param.tensor.data().to_vec(),
            param.tensor.requires_grad,
        )?;
        self.index.insert(name.to_string(), self.bound.len());
        self.bound.push((name.to_string(), var));
        Ok(var)
    }
}

/// Residual block: `y = conv2(silu(conv1(x) + temb_bias)) + x`.
fn res_block<E: Real>(
    tape: &mut Tape<E>,
    binder: &mut Binder<E>,
    prefix: &str,
    x: Var,
    t_feat: Var,
    _cat: bool,
) -> Result<Var> {
    let w1 = binder.get(tape, &format!("{prefix}.conv1.weight"))?;
    let b1 = binder.get(tape, &format!("{prefix}.conv1.bias"))?;
    let h = tape.conv2d(x, w1, Some(b1), 1)?;
    let tw = binder.get(tape, &format!("{prefix}.temb.weight"))?;
    let tb = binder.get(tape, &format!("{prefix}.temb.bias"))?;
    let bias = tape.affine(t_feat, tw, tb)?;
    let shape = {
        let s = tape.shape(h);
        [s[0], s[1], s[2]]
    };
    let bias = tape.broadcast(bias, shape)?;
    let h = tape.add(h, bias)?;
    let h = tape.silu(h)?;
    let w2 = binder.get(tape, &format!("{prefix}.conv2.weight"))?;
    let b2 = binder.get(tape, &format!("{prefix}.conv2.bias"))?;
    let h = tape.conv2d(h, w2, Some(b2), 1)?;
    tape.add(h, x)
}

/// Decoder residual block over a channel-concatenated input: the residual
/// path is a 1x1 projection back to the block width.
fn res_block_cat<E: Real>(
    tape: &mut Tape<E>,
    binder: &mut Binder<E>,
    prefix: &str,
    x: Var,
    t_feat: Var,
) -> Result<Var> {
    let w1 = binder.get(tape, &format!("{prefix}.conv1.weight"))?;
    let b1 = binder.get(tape, &format!("{prefix}.conv1.bias"))?;
    let h = tape.conv2d(x, w1, Some(b1), 1)?;
    let tw = binder.get(tape, &format!("{prefix}.temb.weight"))?;
    let tb = binder.get(tape, &format!("{prefix}.temb.bias"))?;
    let bias = tape.affine(t_feat, tw, tb)?;
    let shape = {
        let s = tape.shape(h);
        [s[0], s[1], s[2]]
    };
    let bias = tape.broadcast(bias, shape)?;
    let h = tape.add(h, bias)?;
    let h = tape.silu(h)?;
    let w2 = binder.get(tape, &format!("{prefix}.conv2.weight"))?;
    let b2 = binder.get(tape, &format!("{prefix}.conv2.bias"))?;
    let h = tape.conv2d(h, w2, Some(b2), 1)?;
    let sw = binder.get(tape, &format!("{prefix}.skip.weight"))?;
    let sb = binder.get(tape, &format!("{prefix}.skip.bias"))?;
    let proj = tape.conv2d(x, sw, Some(sb), 1)?;
    tape.add(h, proj)
}

pub struct ForwardPass {
    pub out: Var,
    bound: Vec<(String, Var)>,
}

impl ForwardPass {
    /// Collect per-parameter gradients from a finished backward pass.
    pub fn grad_map<E: Real>(&self, grads: &Gradients<E>) -> GradMap<E> {
        let mut map = GradMap::new();
        for (name, var) in &self.bound {
            if let Some(g) = grads.get(*var) {
                map.insert(name.clone(), g.to_vec());
            }
        }
        map
    }

    /// Names bound (read) during the forward pass.
    pub fn bound_names(&self) -> impl Iterator<Item = &str> {
        self.bound.iter().map(|(n, _)| n.as_str())
    }
}

#[derive(Clone, Debug)]
pub struct DepthProfileRow {
    pub depth: usize,
    pub params: u64,
    pub cum_param_frac: f64,
    pub macs: u64,
    pub cum_mac_frac: f64,
}

#[derive(Clone, Debug)]
pub struct DepthProfile {
    pub rows: Vec<DepthProfileRow>,
}

impl DepthProfile {
    /// CSV schema: `depth,param_count,param_cum_frac,mac_count,mac_cum_frac`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("depth,param_count,param_cum_frac,mac_count,mac_cum_frac\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.6},{},{:.6}",
                r.depth, r.params, r.cum_param_frac, r.macs, r.cum_mac_frac
            );
        }
        s
    }
}

/// Analytic multiply-accumulate counts per depth level for one full forward.
/// Convolutions and affine maps are counted; elementwise work is ignored.
fn macs_by_depth(cfg: &UNetConfig) -> Vec<u64> {
    let mut macs = vec![0u64; cfg.d_max() + 1];
    let conv = |side: usize, ci: usize, co: usize, k: usize| (side * side * ci * co * k * k) as u64;
    let te = cfg.time_embed_dim;
    let c1 = cfg.channels_at(1);
    let s1 = cfg.image_size;
    macs[1] += conv(s1, cfg.in_channels + cfg.cond_channels, c1, 3); // stem
    macs[1] += 2 * (te * te) as u64; // shared time MLP
    macs[1] += conv(s1, c1, cfg.out_channels, 3); // out conv
    for l in 1..=cfg.levels() {
        let c = cfg.channels_at(l);
        let side = cfg.side_at(l);
        if l > 1 {
            let d = cfg.depth_of(l, 1);
            macs[d] += conv(side, cfg.channels_at(l - 1), c, 3); // down conv
            macs[d] += conv(cfg.side_at(l - 1), c, cfg.channels_at(l - 1), 3); // up conv
        }
        for b in 1..=cfg.blocks_per_level {
            let d = cfg.depth_of(l, b);
            // encoder block
            macs[d] += 2 * conv(side, c, c, 3) + (te * c) as u64;
            // decoder block
            macs[d] += conv(side, 2 * c, c, 3) + conv(side, c, c, 3) + conv(side, 2 * c, c, 1) + (te * c) as u64;
        }
    }
    let cl = cfg.channels_at(cfg.levels());
    let sl = cfg.side_at(cfg.levels());
    macs[cfg.d_max()] += 2 * conv(sl, cl, cl, 3) + (te * cl) as u64;
    macs
}

fn params_by_depth(cfg: &UNetConfig) -> Vec<u64> {
    let mut params = vec![0u64; cfg.d_max() + 1];
    for spec in layout(cfg) {
        params[spec.depth] += spec.shape.iter().product::<usize>() as u64;
    }
    params
}

/// Per-depth parameter counts, MAC counts, and cumulative fractions.
pub fn depth_profile(cfg: &UNetConfig) -> DepthProfile {
    let params = params_by_depth(cfg);
    let macs = macs_by_depth(cfg);
    let total_p: u64 = params.iter().sum();
    let total_m: u64 = macs.iter().sum();
    let mut rows = Vec::new();
    let (mut cp, mut cm) = (0u64, 0u64);
    for d in 1..=cfg.d_max() {
        cp += params[d];
        cm += macs[d];
        rows.push(DepthProfileRow {
            depth: d,
            params: params[d],
            cum_param_frac: cp as f64 / total_p as f64,
            macs: macs[d],
            cum_mac_frac: cm as f64 / total_m as f64,
        });
    }
    DepthProfile { rows }
}

/// Parameters of the model retained when pruned to `depth`.
pub fn param_count_at_depth(cfg: &UNetConfig, depth: usize) -> u64 {
    params_by_depth(cfg)[1..=depth].iter().sum()
}

/// Analytic MACs of one forward pass executed at `depth`.
pub fn macs_at_depth(cfg: &UNetConfig, depth: usize) -> u64 {
    macs_by_depth(cfg)[1..=depth].iter().sum()
}
