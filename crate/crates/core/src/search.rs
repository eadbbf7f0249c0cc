//! The two search procedures: greedy one-dimensional time-step optimization
//! (sign probe, then a walk in `p` with schedule parameter `gamma = p^s`) and
//! depth-search (probe shallower depths until quality falls below a
//! threshold), plus the exhaustive multi-depth oracle and its three-regime
//! comparison report.
//!
//! Both searches are generic over small prober traits so that synthetic
//! oracles with known minimizers can drive them in tests; the diffusion-backed
//! implementations live at the bottom of the module.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::denoiser::UNetConfig;
use crate::diffusion::{ddim_sample, NoisePredictor, NoiseSchedule, SamplerSpec, SampleStats};
use crate::error::{Error, Result};
use crate::numerics::Real;
use crate::schedule::{gamma_schedule, uniform_schedule, GammaSpec, TimestepSchedule};
use crate::tasks::{psnr_db, to_unit_range};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DirectionMode {
    /// Anchor the sign probes on the N-step reference (default).
    Reference,
    /// Anchor on the uniform n-step output, as the update rule reads.
    UniformLiteral,
}

#[derive(Clone, Debug)]
pub struct TsSearchConfig {
    /// Target iteration count n.
    pub n: usize,
    /// Reference iteration count N.
    pub n_ref: usize,
    /// Greedy increment on p.
    pub eta_step: f64,
    /// Sign-probe offset.
    pub eps_probe: f64,
    /// Search images per probe.
    pub batch: usize,
    pub direction_mode: DirectionMode,
    /// Second pass at eta_step/5 around the coarse optimum.
    pub refine: bool,
    /// Endpoint-slide strength of the gamma curve.
    pub alpha: f64,
    /// Largest usable timestep.
    pub t_max: usize,
    /// Guidance scale (1 = single-pass conditional).
    pub guidance: f64,
    /// Sampler stochasticity during search.
    pub eta_ddim: f64,
}

impl Default for TsSearchConfig {
    fn default() -> Self {
        TsSearchConfig {
            n: 5,
            n_ref: 50,
            eta_step: 0.05,
            eps_probe: 0.1,
            batch: 64,
            direction_mode: DirectionMode::Reference,
            refine: false,
            alpha: 30.0,
            t_max: 999,
            guidance: 1.0,
            eta_ddim: 0.0,
        }
    }
}

impl TsSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eta_step <= 0.0 || self.eps_probe <= 0.0 {
            return Err(Error::Config("eta_step and eps_probe must be positive".to_string()));
        }
        if self.n >= self.n_ref {
            return Err(Error::Config(format!(
                "target steps n = {} must be below reference N = {}",
                self.n, self.n_ref
            )));
        }
        if self.batch == 0 {
            return Err(Error::Config("search batch must be >= 1".to_string()));
        }
        Ok(())
    }

    fn gamma_spec(&self, gamma: f64) -> Result<GammaSpec> {
        GammaSpec::new(gamma, self.n, self.t_max, self.alpha)
    }
}

/// One probe of a search run.
#[derive(Clone, Debug)]
pub struct ProbeRecord {
    pub index: usize,
    /// Gamma for time-step search, depth for depth search.
    pub value: f64,
    pub metric: f64,
    pub cum_sampler_calls: u64,
}

/// Record of a completed search: probe trajectory, the chosen value, and
/// invocation accounting. Wall-clock stays in memory only so that persisted
/// manifests are byte-identical across reruns.
#[derive(Clone, Debug)]
pub struct SearchReport {
    pub kind: &'static str,
    /// Greedy trajectory (strictly improving until the final entry).
    pub probes: Vec<ProbeRecord>,
    /// Additional refine-pass probes, if any.
    pub refine_probes: Vec<ProbeRecord>,
    pub chosen: f64,
    pub sampler_calls: u64,
    pub expected_calls: u64,
    pub wall_clock: Duration,
    pub seeds: Vec<u64>,
    pub config_echo: String,
    pub warning: Option<String>,
    pub extra: Vec<(String, String)>,
}

impl SearchReport {
    /// CSV schema: `probe_index,value,metric,cumulative_sampler_calls`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("probe_index,value,metric,cumulative_sampler_calls\n");
        for p in self.probes.iter().chain(&self.refine_probes) {
            let _ = writeln!(s, "{},{},{},{}", p.index, p.value, p.metric, p.cum_sampler_calls);
        }
        s
    }

    /// Key-value manifest (deterministic; excludes wall-clock).
    pub fn to_manifest(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "kind = {}", self.kind);
        let _ = writeln!(s, "chosen = {}", self.chosen);
        let _ = writeln!(s, "probes = {}", self.probes.len());
        let _ = writeln!(s, "refine_probes = {}", self.refine_probes.len());
        let _ = writeln!(s, "sampler_calls = {}", self.sampler_calls);
        let _ = writeln!(s, "expected_calls = {}", self.expected_calls);
        let seeds: Vec<String> = self.seeds.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "seeds = {}", seeds.join(","));
        let _ = writeln!(s, "config = {}", self.config_echo);
        for (k, v) in &self.extra {
            let _ = writeln!(s, "{k} = {v}");
        }
        if let Some(w) = &self.warning {
            let _ = writeln!(s, "warning = {w}");
        }
        s
    }
}

/// Sampling interface for the time-step search. `sample` runs the whole
/// search batch through an n-step schedule at the given gamma; `reference`
/// runs the N-step uniform schedule once.
pub trait GammaSampler {
    type Output;
    fn sample(&mut self, gamma: f64) -> Result<Self::Output>;
    fn reference(&mut self) -> Result<Self::Output>;
    /// Batch-mean squared error over pixels in [0,1] (or the synthetic
    /// equivalent).
    fn distance(&self, a: &Self::Output, b: &Self::Output) -> f64;
    /// Instrumented model invocations so far.
    fn sampler_calls(&self) -> u64;
}

struct SignProbes {
    m_uni: f64,
    m_pos: f64,
    m_neg: f64,
    s: i8,
}

fn sign_probes<S: GammaSampler>(
    sampler: &mut S,
    cfg: &TsSearchConfig,
    reference: &S::Output,
) -> Result<SignProbes> {
    let x_uni = sampler.sample(1.0)?;
    let x_pos = sampler.sample(1.0 + cfg.eps_probe)?;
    let x_neg = sampler.sample(1.0 / (1.0 + cfg.eps_probe))?;
    let (d_pos, d_neg) = match cfg.direction_mode {
        DirectionMode::Reference => {
            (sampler.distance(reference, &x_pos), sampler.distance(reference, &x_neg))
        }
        DirectionMode::UniformLiteral => {
            (sampler.distance(&x_uni, &x_pos), sampler.distance(&x_uni, &x_neg))
        }
    };
    // ties resolve to +1
    let s = if d_neg - d_pos >= 0.0 { 1 } else { -1 };
    let m_uni = sampler.distance(reference, &x_uni);
    let m_pos = sampler.distance(reference, &x_pos);
    let m_neg = sampler.distance(reference, &x_neg);
    Ok(SignProbes { m_uni, m_pos, m_neg, s })
}

/// Which way to bias the schedule: +1 (gamma above 1) or -1 (below 1).
pub fn ts_direction_sign<S: GammaSampler>(sampler: &mut S, cfg: &TsSearchConfig) -> Result<i8> {
    cfg.validate()?;
    let reference = sampler.reference()?;
    Ok(sign_probes(sampler, cfg, &reference)?.s)
}

#[derive(Clone, Debug)]
pub struct TsSearchOutcome {
    pub gamma_star: f64,
    pub schedule: TimestepSchedule,
    pub report: SearchReport,
}

/// Greedy time-step optimization. Walks `p = 1, 1+eta, 1+2 eta, ...` with
/// `gamma = p^s`, measuring the batch distance to the N-step reference, and
/// stops at the first worsening probe. Optionally refines at `eta/5` inside
/// the final bracket.
pub fn ts_optimize<S: GammaSampler>(sampler: &mut S, cfg: &TsSearchConfig) -> Result<TsSearchOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let calls_at_start = sampler.sampler_calls();
    let reference = sampler.reference()?;
    let probes = sign_probes(sampler, cfg, &reference)?;
    let s = probes.s;

    // the walk lives on an integer grid of eta/5 units so refine probes can
    // reuse coarse metrics exactly
    let unit = cfg.eta_step / 5.0;
    let p_of = |g: i64| 1.0 + g as f64 * unit;
    let gamma_of = |g: i64| {
        let p = p_of(g);
        if s > 0 {
            p
        } else {
            1.0 / p
        }
    };
    let mut cache: HashMap<i64, f64> = HashMap::new();
    cache.insert(0, probes.m_uni);
    let mut new_samples: u64 = 0;
    let mut trajectory: Vec<ProbeRecord> = Vec::new();
    let mut refine_trajectory: Vec<ProbeRecord> = Vec::new();
    let mut warning: Option<String> = None;

    let record = |trajectory: &mut Vec<ProbeRecord>, idx: &mut usize, g: i64, m: f64, calls: u64| {
        trajectory.push(ProbeRecord {
            index: *idx,
            value: gamma_of(g),
            metric: m,
            cum_sampler_calls: calls,
        });
        *idx += 1;
    };
    let mut idx = 0usize;
    record(&mut trajectory, &mut idx, 0, probes.m_uni, sampler.sampler_calls() - calls_at_start);

    let mut chosen_g: i64 = 0;
    if probes.m_pos >= probes.m_uni && probes.m_neg >= probes.m_uni {
        warning = Some("both sign probes are no better than uniform; returning gamma = 1".to_string());
    } else {
        // coarse walk in steps of eta (5 grid units)
        let mut g_prev: i64 = 0;
        let mut m_prev = probes.m_uni;
        loop {
            let g = g_prev + 5;
            if cfg.gamma_spec(gamma_of(g)).is_err() {
                warning = Some(format!("walk stopped at parameterization bound p = {}", p_of(g)));
                break;
            }
            let m = match cache.get(&g) {
                Some(&m) => m,
                None => {
                    let out = sampler.sample(gamma_of(g))?;
                    new_samples += 1;
                    let m = sampler.distance(&reference, &out);
                    cache.insert(g, m);
                    m
                }
            };
            record(&mut trajectory, &mut idx, g, m, sampler.sampler_calls() - calls_at_start);
            if m > m_prev {
                break;
            }
            g_prev = g;
            m_prev = m;
        }
        chosen_g = g_prev;
        if trajectory.len() == 2 && chosen_g == 0 && !cfg.refine {
            warning.get_or_insert_with(|| {
                "first greedy probe was worse than uniform; returning gamma = 1".to_string()
            });
        }

        if cfg.refine {
            let start = (g_prev - 5).max(0);
            let end = g_prev + 5;
            let mut m_prev_r = match cache.get(&start) {
                Some(&m) => m,
                None => unreachable!("refine bracket start was visited by the coarse walk"),
            };
            record(&mut refine_trajectory, &mut idx, start, m_prev_r, sampler.sampler_calls() - calls_at_start);
            let mut g_best = start;
            for g in (start + 1)..=end {
                if cfg.gamma_spec(gamma_of(g)).is_err() {
                    break;
                }
                let m = match cache.get(&g) {
                    Some(&m) => m,
                    None => {
                        let out = sampler.sample(gamma_of(g))?;
                        new_samples += 1;
                        let m = sampler.distance(&reference, &out);
                        cache.insert(g, m);
                        m
                    }
                };
                record(&mut refine_trajectory, &mut idx, g, m, sampler.sampler_calls() - calls_at_start);
                if m > m_prev_r {
                    break;
                }
                g_best = g;
                m_prev_r = m;
            }
            chosen_g = g_best;
        }
    }

    let gamma_star = gamma_of(chosen_g);
    let schedule = gamma_schedule(&cfg.gamma_spec(gamma_star)?)?;
    let sampler_calls = sampler.sampler_calls() - calls_at_start;
    // reference N + sign probes 3n + each new greedy sampling n, per image,
    // doubled when guidance takes the two-pass path
    let gmult: u64 = if cfg.guidance == 1.0 { 1 } else { 2 };
    let expected_calls = gmult
        * cfg.batch as u64
        * (cfg.n_ref as u64 + 3 * cfg.n as u64 + cfg.n as u64 * new_samples);
    let report = SearchReport {
        kind: "ts-search",
        probes: trajectory,
        refine_probes: refine_trajectory,
        chosen: gamma_star,
        sampler_calls,
        expected_calls,
        wall_clock: started.elapsed(),
        seeds: Vec::new(),
        config_echo: format!(
            "n={} N={} eta_step={} eps_probe={} batch={} mode={:?} refine={} alpha={} t_max={} w={} eta={}",
            cfg.n,
            cfg.n_ref,
            cfg.eta_step,
            cfg.eps_probe,
            cfg.batch,
            cfg.direction_mode,
            cfg.refine,
            cfg.alpha,
            cfg.t_max,
            cfg.guidance,
            cfg.eta_ddim
        ),
        warning,
        extra: vec![
            ("sign".to_string(), s.to_string()),
            ("sign_m_uni".to_string(), probes.m_uni.to_string()),
            ("sign_m_pos".to_string(), probes.m_pos.to_string()),
            ("sign_m_neg".to_string(), probes.m_neg.to_string()),
        ],
    };
    Ok(TsSearchOutcome { gamma_star, schedule, report })
}

/// Quality prober for the depth search: PSNR (dB) of the depth-d output
/// against the full-depth N-step reference on fixed seeds.
pub trait DepthQualityProber {
    fn quality(&mut self, depth: usize) -> Result<f64>;
    fn sampler_calls(&self) -> u64 {
        0
    }
    /// Analytic invocation count after `probes` quality evaluations.
    fn expected_calls(&self, _probes: u64) -> u64 {
        0
    }
}

#[derive(Clone, Debug)]
pub struct DepthSearchConfig {
    pub d_max: usize,
    /// Minimum acceptable PSNR (dB) against the reference.
    pub threshold: f64,
    pub batch: usize,
    /// Uniform probing steps.
    pub n_ref: usize,
}

#[derive(Clone, Debug)]
pub struct DepthSearchOutcome {
    pub d_star: usize,
    pub no_compression: bool,
    pub report: SearchReport,
}

/// Probe depths from `d_max - 1` downward on fixed seeds; stop at the first
/// depth whose quality falls below the threshold and return the depth above
/// it. If even depth 1 passes, return 1.
pub fn depth_search<P: DepthQualityProber>(
    prober: &mut P,
    cfg: &DepthSearchConfig,
) -> Result<DepthSearchOutcome> {
    if !cfg.threshold.is_finite() && cfg.threshold > 0.0 {
        return Err(Error::Config("depth threshold must be finite or -inf".to_string()));
    }
    if cfg.d_max < 2 {
        return Err(Error::Config(format!("d_max {} leaves nothing to search", cfg.d_max)));
    }
    let started = Instant::now();
    let mut probes = Vec::new();
    let mut d_star = 1;
    let mut failed_at = None;
    for (i, d) in (1..cfg.d_max).rev().enumerate() {
        let m = prober.quality(d)?;
        probes.push(ProbeRecord {
            index: i,
            value: d as f64,
            metric: m,
            cum_sampler_calls: prober.sampler_calls(),
        });
        if m < cfg.threshold {
            d_star = d + 1;
            failed_at = Some(d);
            break;
        }
    }
    let no_compression = failed_at == Some(cfg.d_max - 1);
    let report = SearchReport {
        kind: "depth-search",
        probes,
        refine_probes: Vec::new(),
        chosen: d_star as f64,
        sampler_calls: prober.sampler_calls(),
        expected_calls: prober.expected_calls(failed_at
            .map(|d| (cfg.d_max - 1 - d + 1) as u64)
            .unwrap_or((cfg.d_max - 1) as u64)),
        wall_clock: started.elapsed(),
        seeds: Vec::new(),
        config_echo: format!(
            "d_max={} threshold={} batch={} N={}",
            cfg.d_max, cfg.threshold, cfg.batch, cfg.n_ref
        ),
        warning: no_compression.then(|| "no depth below d_max met the threshold".to_string()),
        extra: Vec::new(),
    };
    Ok(DepthSearchOutcome { d_star, no_compression, report })
}

#[derive(Clone, Debug)]
pub struct MultiDepthConfig {
    /// Candidate depth set D.
    pub depths: Vec<usize>,
    /// Denoising steps.
    pub n: usize,
    /// Steps per depth group (consecutive steps share a depth).
    pub group: usize,
    /// Enumeration guard.
    pub guard: usize,
}

impl MultiDepthConfig {
    pub fn validate(&self) -> Result<usize> {
        if self.depths.is_empty() || self.n == 0 || self.group == 0 {
            return Err(Error::Config("multi-depth config must be non-empty".to_string()));
        }
        if self.n % self.group != 0 {
            return Err(Error::Config(format!(
                "group size {} must divide step count {}",
                self.group, self.n
            )));
        }
        let groups = self.n / self.group;
        let count = self.depths.len().checked_pow(groups as u32).unwrap_or(usize::MAX);
        if count > self.guard {
            return Err(Error::Config(format!(
                "{count} depth assignments exceed the guard of {}",
                self.guard
            )));
        }
        Ok(count)
    }
}

#[derive(Clone, Debug)]
pub struct MultiDepthRow {
    /// Depth per group, ordered from the largest timestep.
    pub group_depths: Vec<usize>,
    pub psnr: f64,
    /// Parameters retained by the deepest level used anywhere in the run.
    pub param_proxy: u64,
    /// Analytic MACs summed over all steps.
    pub mac_proxy: u64,
}

impl MultiDepthRow {
    pub fn is_constant_depth(&self) -> bool {
        self.group_depths.windows(2).all(|w| w[0] == w[1])
    }

    pub fn max_depth(&self) -> usize {
        *self.group_depths.iter().max().unwrap()
    }
}

/// Batch evaluator for one per-step depth assignment.
pub trait MultiDepthProber {
    /// Mean PSNR against the full-depth reference with the same schedule.
    fn evaluate(&mut self, per_step_depths: &[usize]) -> Result<f64>;
    fn param_proxy(&self, max_depth: usize) -> u64;
    fn mac_proxy(&self, per_step_depths: &[usize]) -> u64;
}

/// Exhaustively score every depth assignment (one depth per step group).
pub fn multi_depth_enumerate<P: MultiDepthProber>(
    prober: &mut P,
    cfg: &MultiDepthConfig,
) -> Result<Vec<MultiDepthRow>> {
    let count = cfg.validate()?;
    let groups = cfg.n / cfg.group;
    let mut rows = Vec::with_capacity(count);
    let mut assignment = vec![0usize; groups];
    loop {
        let group_depths: Vec<usize> = assignment.iter().map(|&i| cfg.depths[i]).collect();
        let per_step: Vec<usize> =
            group_depths.iter().flat_map(|&d| std::iter::repeat_n(d, cfg.group)).collect();
        let psnr = prober.evaluate(&per_step)?;
        let max_depth = *group_depths.iter().max().unwrap();
        rows.push(MultiDepthRow {
            group_depths,
            psnr,
            param_proxy: prober.param_proxy(max_depth),
            mac_proxy: prober.mac_proxy(&per_step),
        });
        // odometer increment, first group fastest
        let mut i = 0;
        loop {
            if i == groups {
                return Ok(rows);
            }
            assignment[i] += 1;
            if assignment[i] < cfg.depths.len() {
                break;
            }
            assignment[i] = 0;
            i += 1;
        }
    }
}

#[derive(Clone, Debug)]
pub struct RegimeRow {
    pub group_depths: Vec<usize>,
    pub d_psnr: f64,
    pub d_param_pct: f64,
    pub d_mac_pct: f64,
}

#[derive(Clone, Debug)]
pub struct BaselineComparison {
    pub depth: usize,
    pub psnr: f64,
    pub param: u64,
    pub mac: u64,
    /// Same parameter budget, quality within tolerance, minimum MACs.
    pub fix_param_min_mac: Option<RegimeRow>,
    /// MACs within tolerance, maximum quality.
    pub fix_mac_max_quality: Option<RegimeRow>,
    /// Quality within tolerance, minimum MACs at any parameter budget.
    pub fix_quality_min_mac: Option<RegimeRow>,
}

fn delta_row(row: &MultiDepthRow, base: &MultiDepthRow) -> RegimeRow {
    RegimeRow {
        group_depths: row.group_depths.clone(),
        d_psnr: row.psnr - base.psnr,
        d_param_pct: 100.0 * (row.param_proxy as f64 - base.param_proxy as f64)
            / base.param_proxy as f64,
        d_mac_pct: 100.0 * (row.mac_proxy as f64 - base.mac_proxy as f64) / base.mac_proxy as f64,
    }
}

/// Three-regime comparison of every all-same-depth baseline against the full
/// table: (a) fixed parameter budget, minimize MACs; (b) fixed MACs, maximize
/// quality; (c) fixed quality, minimize MACs.
pub fn pareto_report(
    rows: &[MultiDepthRow],
    quality_tol_db: f64,
    mac_tol_frac: f64,
) -> Vec<BaselineComparison> {
    let mut baselines: Vec<&MultiDepthRow> = rows.iter().filter(|r| r.is_constant_depth()).collect();
    baselines.sort_by_key(|r| std::cmp::Reverse(r.max_depth()));
    let mut out = Vec::new();
    for base in baselines {
        let quality_ok = |r: &MultiDepthRow| r.psnr >= base.psnr - quality_tol_db;
        let a = rows
            .iter()
            .filter(|r| r.param_proxy == base.param_proxy && quality_ok(r))
            .min_by(|x, y| {
                (x.mac_proxy, &x.group_depths).cmp(&(y.mac_proxy, &y.group_depths))
            });
        let b = rows
            .iter()
            .filter(|r| r.mac_proxy as f64 <= base.mac_proxy as f64 * (1.0 + mac_tol_frac))
            .max_by(|x, y| {
                x.psnr
                    .partial_cmp(&y.psnr)
                    .unwrap()
                    .then_with(|| (y.mac_proxy, &y.group_depths).cmp(&(x.mac_proxy, &x.group_depths)))
            });
        let c = rows.iter().filter(|r| quality_ok(r)).min_by(|x, y| {
            (x.mac_proxy, &x.group_depths).cmp(&(y.mac_proxy, &y.group_depths))
        });
        out.push(BaselineComparison {
            depth: base.max_depth(),
            psnr: base.psnr,
            param: base.param_proxy,
            mac: base.mac_proxy,
            fix_param_min_mac: a.map(|r| delta_row(r, base)),
            fix_mac_max_quality: b.map(|r| delta_row(r, base)),
            fix_quality_min_mac: c.map(|r| delta_row(r, base)),
        });
    }
    out
}

/// Plain-text rendering of the three-regime comparison.
pub fn pareto_to_text(comparisons: &[BaselineComparison]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<6} {:>8} | (a) fix param, min MAC | (b) fix MAC, max quality | (c) fix quality, min MAC",
        "depth", "PSNR"
    );
    for c in comparisons {
        let fmt = |r: &Option<RegimeRow>, which: usize| -> String {
            match r {
                None => "empty".to_string(),
                Some(r) => match which {
                    0 => format!("dMAC {:+.2}%", r.d_mac_pct),
                    1 => format!("dPSNR {:+.3} dParam {:+.2}%", r.d_psnr, r.d_param_pct),
                    _ => format!("dMAC {:+.2}% dParam {:+.2}%", r.d_mac_pct, r.d_param_pct),
                },
            }
        };
        let _ = writeln!(
            s,
            "{:<6} {:>8.3} | {:<22} | {:<24} | {}",
            c.depth,
            c.psnr,
            fmt(&c.fix_param_min_mac, 0),
            fmt(&c.fix_mac_max_quality, 1),
            fmt(&c.fix_quality_min_mac, 2),
        );
    }
    s
}

// ---------------------------------------------------------------------------
// Diffusion-backed probers
// ---------------------------------------------------------------------------

/// Batch sampler over a trained predictor for the time-step search.
pub struct DiffusionGammaSampler<'a, E: Real, P: NoisePredictor<E> + Sync> {
    pub predictor: &'a P,
    pub noise: &'a NoiseSchedule,
    /// Conditions in model range, one per search image.
    pub conds: Vec<Vec<E>>,
    /// Per-image noise seeds.
    pub seeds: Vec<u64>,
    pub cfg: TsSearchConfig,
    calls: u64,
}

impl<'a, E: Real, P: NoisePredictor<E> + Sync> DiffusionGammaSampler<'a, E, P> {
    pub fn new(
        predictor: &'a P,
        noise: &'a NoiseSchedule,
        conds: Vec<Vec<E>>,
        seeds: Vec<u64>,
        cfg: TsSearchConfig,
    ) -> Result<Self> {
        if conds.len() != seeds.len() || conds.len() != cfg.batch {
            return Err(Error::Config(format!(
                "search batch {} needs matching conditions ({}) and seeds ({})",
                cfg.batch,
                conds.len(),
                seeds.len()
            )));
        }
        Ok(DiffusionGammaSampler { predictor, noise, conds, seeds, cfg, calls: 0 })
    }

    fn run(&mut self, schedule: &TimestepSchedule) -> Result<Vec<Vec<E>>> {
        let spec_base = SamplerSpec {
            eta: self.cfg.eta_ddim,
            guidance: self.cfg.guidance,
            noise_seed: 0,
        };
        let results: Vec<Result<(Vec<E>, u64)>> = self
            .conds
            .par_iter()
            .zip(self.seeds.par_iter())
            .map(|(cond, &seed)| {
                let mut stats = SampleStats::default();
                let spec = SamplerSpec { noise_seed: seed, ..spec_base.clone() };
                let out = ddim_sample(self.predictor, self.noise, cond, schedule, &spec, None, &mut stats)?;
                Ok((to_unit_range(&out), stats.model_calls))
            })
            .collect();
        let mut outs = Vec::with_capacity(results.len());
        for r in results {
            let (img, calls) = r?;
            self.calls += calls;
            outs.push(img);
        }
        Ok(outs)
    }
}

impl<E: Real, P: NoisePredictor<E> + Sync> GammaSampler for DiffusionGammaSampler<'_, E, P> {
    type Output = Vec<Vec<E>>;

    fn sample(&mut self, gamma: f64) -> Result<Self::Output> {
        let schedule = gamma_schedule(&self.cfg.gamma_spec(gamma)?)?;
        self.run(&schedule)
    }

    fn reference(&mut self) -> Result<Self::Output> {
        let schedule = uniform_schedule(self.cfg.n_ref, self.cfg.t_max)?;
        self.run(&schedule)
    }

    fn distance(&self, a: &Self::Output, b: &Self::Output) -> f64 {
        let mut acc = 0.0;
        for (x, y) in a.iter().zip(b) {
            acc += crate::tasks::mse(x, y).expect("matching shapes within one sampler");
        }
        acc / a.len() as f64
    }

    fn sampler_calls(&self) -> u64 {
        self.calls
    }
}

/// Depth-quality prober over a trained predictor: uniform N-step sampling at
/// each probed depth, scored against the cached full-depth reference.
pub struct DiffusionDepthProber<'a, E: Real, P: NoisePredictor<E> + Sync> {
    pub predictor: &'a P,
    pub noise: &'a NoiseSchedule,
    pub conds: Vec<Vec<E>>,
    pub seeds: Vec<u64>,
    pub d_max: usize,
    pub n_ref: usize,
    pub t_max: usize,
    pub guidance: f64,
    reference: Option<Vec<Vec<E>>>,
    calls: u64,
}

impl<'a, E: Real, P: NoisePredictor<E> + Sync> DiffusionDepthProber<'a, E, P> {
    pub fn new(
        predictor: &'a P,
        noise: &'a NoiseSchedule,
        conds: Vec<Vec<E>>,
        seeds: Vec<u64>,
        d_max: usize,
        n_ref: usize,
        t_max: usize,
        guidance: f64,
    ) -> Self {
        DiffusionDepthProber {
            predictor,
            noise,
            conds,
            seeds,
            d_max,
            n_ref,
            t_max,
            guidance,
            reference: None,
            calls: 0,
        }
    }

    fn run_at_depth(&mut self, depth: usize) -> Result<Vec<Vec<E>>> {
        let schedule = uniform_schedule(self.n_ref, self.t_max)?;
        let depths = vec![depth; schedule.len()];
        let results: Vec<Result<(Vec<E>, u64)>> = self
            .conds
            .par_iter()
            .zip(self.seeds.par_iter())
            .map(|(cond, &seed)| {
                let mut stats = SampleStats::default();
                let spec = SamplerSpec { eta: 0.0, guidance: self.guidance, noise_seed: seed };
                let out = ddim_sample(
                    self.predictor,
                    self.noise,
                    cond,
                    &schedule,
                    &spec,
                    Some(&depths),
                    &mut stats,
                )?;
                Ok((to_unit_range(&out), stats.model_calls))
            })
            .collect();
        let mut outs = Vec::with_capacity(results.len());
        for r in results {
            let (img, calls) = r?;
            self.calls += calls;
            outs.push(img);
        }
        Ok(outs)
    }

    /// PSNR of the full-depth run against itself is the cap; expose the
    /// reference computation for threshold derivation.
    pub fn ensure_reference(&mut self) -> Result<()> {
        if self.reference.is_none() {
            let r = self.run_at_depth(self.d_max)?;
            self.reference = Some(r);
        }
        Ok(())
    }

    pub fn reference_outputs(&self) -> Option<&Vec<Vec<E>>> {
        self.reference.as_ref()
    }
}

impl<E: Real, P: NoisePredictor<E> + Sync> DepthQualityProber for DiffusionDepthProber<'_, E, P> {
    fn quality(&mut self, depth: usize) -> Result<f64> {
        self.ensure_reference()?;
        let outs = self.run_at_depth(depth)?;
        let reference = self.reference.as_ref().unwrap();
        let mut acc = 0.0;
        for (a, b) in outs.iter().zip(reference) {
            acc += psnr_db(crate::tasks::mse(a, b)?);
        }
        Ok(acc / outs.len() as f64)
    }

    fn sampler_calls(&self) -> u64 {
        self.calls
    }

    fn expected_calls(&self, probes: u64) -> u64 {
        let gmult = if self.guidance == 1.0 { 1 } else { 2 };
        // probes plus the one-time reference
        gmult * (probes + 1) * self.conds.len() as u64 * self.n_ref as u64
    }
}

/// Multi-depth evaluator: n-step uniform schedule, per-step depth overrides,
/// PSNR against the all-d_max run on the same seeds.
pub struct DiffusionMultiDepthProber<'a, E: Real, P: NoisePredictor<E> + Sync> {
    pub predictor: &'a P,
    pub noise: &'a NoiseSchedule,
    pub unet: &'a UNetConfig,
    pub conds: Vec<Vec<E>>,
    pub seeds: Vec<u64>,
    pub n: usize,
    pub t_max: usize,
    pub guidance: f64,
    reference: Option<Vec<Vec<E>>>,
    pub calls: u64,
}

impl<'a, E: Real, P: NoisePredictor<E> + Sync> DiffusionMultiDepthProber<'a, E, P> {
    pub fn new(
        predictor: &'a P,
        noise: &'a NoiseSchedule,
        unet: &'a UNetConfig,
        conds: Vec<Vec<E>>,
        seeds: Vec<u64>,
        n: usize,
        t_max: usize,
        guidance: f64,
    ) -> Self {
        DiffusionMultiDepthProber {
            predictor,
            noise,
            unet,
            conds,
            seeds,
            n,
            t_max,
            guidance,
            reference: None,
            calls: 0,
        }
    }

    fn run(&mut self, per_step_depths: &[usize]) -> Result<Vec<Vec<E>>> {
        let schedule = uniform_schedule(self.n, self.t_max)?;
        let results: Vec<Result<(Vec<E>, u64)>> = self
            .conds
            .par_iter()
            .zip(self.seeds.par_iter())
            .map(|(cond, &seed)| {
                let mut stats = SampleStats::default();
                let spec = SamplerSpec { eta: 0.0, guidance: self.guidance, noise_seed: seed };
                let out = ddim_sample(
                    self.predictor,
                    self.noise,
                    cond,
                    &schedule,
                    &spec,
                    Some(per_step_depths),
                    &mut stats,
                )?;
                Ok((to_unit_range(&out), stats.model_calls))
            })
            .collect();
        let mut outs = Vec::with_capacity(results.len());
        for r in results {
            let (img, calls) = r?;
            self.calls += calls;
            outs.push(img);
        }
        Ok(outs)
    }
}

impl<E: Real, P: NoisePredictor<E> + Sync> MultiDepthProber
    for DiffusionMultiDepthProber<'_, E, P>
{
    fn evaluate(&mut self, per_step_depths: &[usize]) -> Result<f64> {
        if self.reference.is_none() {
            let full = vec![self.unet.d_max(); self.n];
            let r = self.run(&full)?;
            self.reference = Some(r);
        }
        let outs = self.run(per_step_depths)?;
        let reference = self.reference.as_ref().unwrap();
        let mut acc = 0.0;
        for (a, b) in outs.iter().zip(reference) {
            acc += psnr_db(crate::tasks::mse(a, b)?);
        }
        Ok(acc / outs.len() as f64)
    }

    fn param_proxy(&self, max_depth: usize) -> u64 {
        crate::denoiser::param_count_at_depth(self.unet, max_depth)
    }

    fn mac_proxy(&self, per_step_depths: &[usize]) -> u64 {
        let gmult = if self.guidance == 1.0 { 1 } else { 2 };
        gmult * per_step_depths.iter().map(|&d| crate::denoiser::macs_at_depth(self.unet, d)).sum::<u64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Synthetic sampler whose output is a scalar `f(gamma)` and whose
    /// distance is squared difference; call accounting mimics the real one.
    struct ScalarOracle<F: Fn(f64) -> f64> {
        f: F,
        reference_pos: f64,
        cfg: TsSearchConfig,
        calls: u64,
    }

    impl<F: Fn(f64) -> f64> ScalarOracle<F> {
        fn new(f: F, reference_pos: f64, cfg: TsSearchConfig) -> Self {
            ScalarOracle { f, reference_pos, cfg, calls: 0 }
        }
    }

    impl<F: Fn(f64) -> f64> GammaSampler for ScalarOracle<F> {
        type Output = f64;
        fn sample(&mut self, gamma: f64) -> Result<f64> {
            self.calls += (self.cfg.batch * self.cfg.n) as u64;
            Ok((self.f)(gamma))
        }
        fn reference(&mut self) -> Result<f64> {
            self.calls += (self.cfg.batch * self.cfg.n_ref) as u64;
            Ok(self.reference_pos)
        }
        fn distance(&self, a: &f64, b: &f64) -> f64 {
            (a - b) * (a - b)
        }
        fn sampler_calls(&self) -> u64 {
            self.calls
        }
    }

    fn cfg_small() -> TsSearchConfig {
        TsSearchConfig { batch: 4, n: 5, n_ref: 50, ..TsSearchConfig::default() }
    }

    /// Oracle embedding gamma on the real line: distance to the reference at
    /// `center` is exactly (gamma - center)^2.
    fn position_oracle(center: f64) -> ScalarOracle<impl Fn(f64) -> f64> {
        ScalarOracle::new(|g| g, center, cfg_small())
    }

    #[test]
    fn direction_sign_follows_the_landscape() {
        // minimum at gamma = 2: the upward probe is closer to the reference
        let mut o = position_oracle(2.0);
        assert_eq!(ts_direction_sign(&mut o, &cfg_small()).unwrap(), 1);
        // minimum at gamma = 0.5
        let mut o = position_oracle(0.5);
        assert_eq!(ts_direction_sign(&mut o, &cfg_small()).unwrap(), -1);
        // flat landscape: probes tie, resolved to +1
        let mut o = ScalarOracle::new(|_| 7.0, 7.0, cfg_small());
        assert_eq!(ts_direction_sign(&mut o, &cfg_small()).unwrap(), 1);
    }

    #[test]
    fn greedy_walk_lands_within_one_step_of_known_minimizers() {
        for center in [0.4, 0.7, 1.0, 1.3, 2.0] {
            let mut o = position_oracle(center);
            let out = ts_optimize(&mut o, &cfg_small()).unwrap();
            assert!(
                (out.gamma_star - center).abs() <= cfg_small().eta_step + 1e-9,
                "center {center}: got {}",
                out.gamma_star
            );
            assert_eq!(out.report.sampler_calls, out.report.expected_calls, "center {center}");
        }
    }

    #[test]
    fn refine_tightens_to_a_fifth_of_the_step() {
        let cfg = TsSearchConfig { refine: true, ..cfg_small() };
        for center in [0.43, 0.77, 1.23, 1.81] {
            let mut o = ScalarOracle::new(|g| g, center, cfg.clone());
            let out = ts_optimize(&mut o, &cfg).unwrap();
            assert!(
                (out.gamma_star - center).abs() <= cfg.eta_step / 5.0 + 1e-9,
                "center {center}: got {}",
                out.gamma_star
            );
            assert_eq!(out.report.sampler_calls, out.report.expected_calls);
        }
    }

    #[test]
    fn degenerate_minimum_at_uniform_returns_one_with_warning() {
        let mut o = position_oracle(1.0);
        let out = ts_optimize(&mut o, &cfg_small()).unwrap();
        assert_eq!(out.gamma_star, 1.0);
        assert!(out.report.warning.is_some());
        // only the sign probes and reference were sampled
        let expect = (cfg_small().batch * (cfg_small().n_ref + 3 * cfg_small().n)) as u64;
        assert_eq!(out.report.sampler_calls, expect);
    }

    #[test]
    fn greedy_trajectory_is_strictly_improving_until_the_stop() {
        let mut o = position_oracle(1.3);
        let out = ts_optimize(&mut o, &cfg_small()).unwrap();
        let metrics: Vec<f64> = out.report.probes.iter().map(|p| p.metric).collect();
        for w in metrics.windows(2).take(metrics.len().saturating_sub(2)) {
            assert!(w[1] < w[0], "trajectory not improving: {metrics:?}");
        }
        let last = metrics[metrics.len() - 1];
        let prev = metrics[metrics.len() - 2];
        assert!(last >= prev, "final entry must be the worsening probe");
        // schedule is produced from the chosen gamma
        assert_eq!(out.schedule.len(), cfg_small().n);
    }

    #[test]
    fn literal_mode_anchors_on_the_uniform_output() {
        // f maps gamma to an output position; with the literal anchor the
        // sign compares |f(1) - f(probe)| for the two probes
        let cfg = TsSearchConfig { direction_mode: DirectionMode::UniformLiteral, ..cfg_small() };
        // f rises steeply above 1 and gently below: literal mode picks -1
        // because the downward probe's output stays closer to f(1)
        let mut o = ScalarOracle::new(|g| if g >= 1.0 { 10.0 * (g - 1.0) } else { 1.0 - g }, 0.0, cfg.clone());
        assert_eq!(ts_direction_sign(&mut o, &cfg).unwrap(), -1);
        let cfg_ref = TsSearchConfig { direction_mode: DirectionMode::Reference, ..cfg_small() };
        // the reference anchor at 0 sees the downward probe as closer too,
        // but via the reference distance, not the uniform output
        let mut o = ScalarOracle::new(|g| if g >= 1.0 { 10.0 * (g - 1.0) } else { 1.0 - g }, 0.0, cfg_ref.clone());
        assert_eq!(ts_direction_sign(&mut o, &cfg_ref).unwrap(), -1);
    }

    /// Stubbed per-depth quality table.
    struct TableProber {
        table: HashMap<usize, f64>,
        probed: Vec<usize>,
    }

    impl DepthQualityProber for TableProber {
        fn quality(&mut self, depth: usize) -> Result<f64> {
            self.probed.push(depth);
            Ok(self.table[&depth])
        }
    }

    fn table(entries: &[(usize, f64)]) -> TableProber {
        TableProber { table: entries.iter().cloned().collect(), probed: Vec::new() }
    }

    #[test]
    fn depth_search_stops_above_the_first_failure() {
        let mut p = table(&[(9, 30.0), (8, 29.0), (7, 26.0), (6, 20.0)]);
        let cfg = DepthSearchConfig { d_max: 10, threshold: 28.0, batch: 1, n_ref: 50 };
        let out = depth_search(&mut p, &cfg).unwrap();
        assert_eq!(out.d_star, 8);
        assert!(!out.no_compression);
        // probes strictly decrease and stop at the failing depth
        assert_eq!(p.probed, vec![9, 8, 7]);
    }

    #[test]
    fn depth_search_threshold_minus_infinity_reaches_one() {
        let entries: Vec<(usize, f64)> = (1..9).map(|d| (d, 30.0)).collect();
        let mut p = table(&entries);
        let cfg = DepthSearchConfig { d_max: 9, threshold: f64::NEG_INFINITY, batch: 1, n_ref: 50 };
        let out = depth_search(&mut p, &cfg).unwrap();
        assert_eq!(out.d_star, 1);
        assert_eq!(p.probed, (1..9).rev().collect::<Vec<_>>());
        // no depth probed twice
        let mut sorted = p.probed.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), p.probed.len());
    }

    #[test]
    fn depth_search_flags_no_compression() {
        let mut p = table(&[(8, 10.0)]);
        let cfg = DepthSearchConfig { d_max: 9, threshold: 28.0, batch: 1, n_ref: 50 };
        let out = depth_search(&mut p, &cfg).unwrap();
        assert_eq!(out.d_star, 9);
        assert!(out.no_compression);
        assert!(out.report.warning.is_some());
    }

    #[test]
    fn depth_search_matches_exhaustive_scan_on_stub_tables() {
        // randomized monotone tables: d* equals the shallowest passing depth
        for seed in 0..20u64 {
            let mut r = crate::rng::stream(seed, "tables");
            use rand::Rng;
            let d_max = 6 + (seed % 4) as usize;
            let thr = 25.0;
            let mut q = Vec::new();
            let mut cur = 35.0;
            for _ in 1..d_max {
                cur -= r.random_range(0.0..6.0);
                q.push(cur);
            }
            q.reverse(); // q[d-1] for depth d, increasing with depth
            let entries: Vec<(usize, f64)> = (1..d_max).map(|d| (d, q[d - 1])).collect();
            let mut p = table(&entries);
            let cfg = DepthSearchConfig { d_max, threshold: thr, batch: 1, n_ref: 50 };
            let out = depth_search(&mut p, &cfg).unwrap();
            let exhaustive = (1..=d_max)
                .find(|&d| d == d_max || entries.iter().find(|(dd, _)| *dd == d).unwrap().1 >= thr)
                .unwrap();
            assert_eq!(out.d_star, exhaustive, "seed {seed}: table {entries:?}");
        }
    }

    /// Multi-depth stub: quality grows with the MAC-weighted depth profile.
    struct StubMulti;

    impl MultiDepthProber for StubMulti {
        fn evaluate(&mut self, per_step_depths: &[usize]) -> Result<f64> {
            Ok(per_step_depths.iter().map(|&d| d as f64).sum::<f64>() / per_step_depths.len() as f64)
        }
        fn param_proxy(&self, max_depth: usize) -> u64 {
            (max_depth as u64) * 100
        }
        fn mac_proxy(&self, per_step_depths: &[usize]) -> u64 {
            per_step_depths.iter().map(|&d| d as u64 * 10).sum()
        }
    }

    #[test]
    fn enumeration_counts_and_constant_rows() {
        let cfg = MultiDepthConfig { depths: vec![7, 8, 9], n: 6, group: 2, guard: 10_000 };
        let rows = multi_depth_enumerate(&mut StubMulti, &cfg).unwrap();
        assert_eq!(rows.len(), 27);
        let constant: Vec<&MultiDepthRow> = rows.iter().filter(|r| r.is_constant_depth()).collect();
        assert_eq!(constant.len(), 3);
        // guard trips
        let cfg = MultiDepthConfig { depths: vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 10], n: 10, group: 2, guard: 10_000 };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("100000"), "{err}");
    }

    #[test]
    fn pareto_on_constant_only_table_has_zero_deltas() {
        let rows = vec![
            MultiDepthRow { group_depths: vec![9, 9, 9], psnr: 40.0, param_proxy: 900, mac_proxy: 270 },
            MultiDepthRow { group_depths: vec![8, 8, 8], psnr: 30.0, param_proxy: 800, mac_proxy: 240 },
            MultiDepthRow { group_depths: vec![7, 7, 7], psnr: 20.0, param_proxy: 700, mac_proxy: 210 },
        ];
        let report = pareto_report(&rows, 0.2, 0.01);
        for c in &report {
            for r in [&c.fix_param_min_mac, &c.fix_mac_max_quality, &c.fix_quality_min_mac] {
                let r = r.as_ref().unwrap();
                assert_eq!(r.d_psnr, 0.0);
                assert_eq!(r.d_param_pct, 0.0);
                assert_eq!(r.d_mac_pct, 0.0);
            }
        }
    }

    #[test]
    fn pareto_hand_built_fixture() {
        // baseline 8: a mixed row trades quality within tolerance for fewer
        // MACs at the same parameter budget; another buys quality with a
        // deeper (larger) budget at equal MACs.
        let rows = vec![
            MultiDepthRow { group_depths: vec![8, 8, 8], psnr: 30.0, param_proxy: 800, mac_proxy: 240 },
            MultiDepthRow { group_depths: vec![8, 8, 7], psnr: 29.9, param_proxy: 800, mac_proxy: 230 },
            MultiDepthRow { group_depths: vec![9, 7, 7], psnr: 30.5, param_proxy: 900, mac_proxy: 240 },
            MultiDepthRow { group_depths: vec![7, 7, 7], psnr: 24.0, param_proxy: 700, mac_proxy: 210 },
        ];
        let report = pareto_report(&rows, 0.2, 0.01);
        let base8 = report.iter().find(|c| c.depth == 8 && c.param == 800).unwrap();
        let a = base8.fix_param_min_mac.as_ref().unwrap();
        assert_eq!(a.group_depths, vec![8, 8, 7]);
        assert!((a.d_mac_pct - (230.0 - 240.0) / 240.0 * 100.0).abs() < 1e-9);
        let b = base8.fix_mac_max_quality.as_ref().unwrap();
        assert_eq!(b.group_depths, vec![9, 7, 7]);
        assert!((b.d_psnr - 0.5).abs() < 1e-9);
        assert!(b.d_param_pct > 0.0);
        let c = base8.fix_quality_min_mac.as_ref().unwrap();
        assert_eq!(c.group_depths, vec![8, 8, 7]);
    }

    #[test]
    fn pareto_empty_regime_is_marked() {
        let rows = vec![
            MultiDepthRow { group_depths: vec![9, 9, 9], psnr: 40.0, param_proxy: 900, mac_proxy: 270 },
            MultiDepthRow { group_depths: vec![8, 9, 9], psnr: 20.0, param_proxy: 900, mac_proxy: 260 },
        ];
        let report = pareto_report(&rows, 0.2, 0.01);
        let base = &report[0];
        // only the baseline itself satisfies the quality constraint
        assert_eq!(base.fix_param_min_mac.as_ref().unwrap().d_mac_pct, 0.0);
        // a constant-only variant where nothing is within tolerance at all:
        let rows2 = vec![MultiDepthRow {
            group_depths: vec![9, 9, 9],
            psnr: f64::NAN,
            param_proxy: 900,
            mac_proxy: 270,
        }];
        // NaN quality never satisfies the filter
        let r2 = pareto_report(&rows2, 0.2, 0.01);
        assert!(r2[0].fix_param_min_mac.is_none());
        assert!(r2[0].fix_quality_min_mac.is_none());
    }
}
