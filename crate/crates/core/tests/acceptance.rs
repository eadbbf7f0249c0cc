//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! with its measured numbers. Heavy criteria share one trained fixture.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::sync::OnceLock;
use std::time::Instant;

use skipstep::denoiser::{depth_profile, param_count_at_depth, DenoiserModel, UNetConfig};
use skipstep::diffusion::{
    ddim_sample, linear_beta_schedule, NoisePredictor, NoiseSchedule, SamplerSpec, SampleStats,
    UNetLossFragment,
};
use skipstep::numerics::{grad_check, DiffFragment};
use skipstep::pipeline::config::{load_config, RunConfig};
use skipstep::pipeline::{
    build_model, finetune_model, run_depth_search, run_multi_depth, run_ts_search, train_model,
};
use skipstep::rng;
use skipstep::schedule::{
    discretize, gamma_curve, gamma_schedule, scaled_gamma_curve, uniform_schedule, GammaSpec,
    TimestepSchedule,
};
use skipstep::search::{
    depth_search, ts_optimize, DepthQualityProber, DepthSearchConfig, GammaSampler,
    TsSearchConfig,
};
use skipstep::tasks::{mse, psnr_db, to_unit_range};

/// Commitment: the fast-profile bring-up seed used by every heavy criterion.
const FIXTURE_SEED: u64 = 42;

fn fast_cfg() -> RunConfig {
    let mut cfg = load_config("", &[]).unwrap();
    cfg.override_master_seed(FIXTURE_SEED);
    cfg
}

struct Fixture {
    cfg: RunConfig,
    noise: NoiseSchedule,
    model: DenoiserModel<f32>,
    train_minutes: f64,
}

static FIXTURE: OnceLock<Fixture> = OnceLock::new();

fn fixture() -> &'static Fixture {
    FIXTURE.get_or_init(|| {
        let cfg = fast_cfg();
        let noise = linear_beta_schedule(cfg.t_total).unwrap();
        let mut model = build_model::<f32>(&cfg).unwrap();
        let t0 = Instant::now();
        let log = train_model(&mut model, &noise, &cfg).unwrap();
        let train_minutes = t0.elapsed().as_secs_f64() / 60.0;
        println!(
            "[fixture] restore fast profile: {} steps, loss {:.3} -> {:.3}, {:.1} min",
            log.steps, log.first_window_mean, log.last_window_mean, train_minutes
        );
        assert!(
            log.last_window_mean < 0.5 * log.first_window_mean,
            "bring-up baseline: final loss window must halve the first ({} vs {})",
            log.last_window_mean,
            log.first_window_mean
        );
        Fixture { cfg, noise, model, train_minutes }
    })
}

/// Sample one validation item through a schedule at a depth, plus shared
/// helpers for the end-to-end criteria.
fn sample_val_item(
    fx: &Fixture,
    item: usize,
    schedule: &TimestepSchedule,
    depth: usize,
) -> Vec<f32> {
    let (cond, _) = skipstep::pipeline::train::val_pair::<f32>(&fx.cfg, item).unwrap();
    let seed = rng::derive(fx.cfg.seed_noise(), &format!("eval/{item}"));
    let spec = SamplerSpec { eta: 0.0, guidance: 1.0, noise_seed: seed };
    let depths = vec![depth; schedule.len()];
    let mut stats = SampleStats::default();
    let out =
        ddim_sample(&fx.model, &fx.noise, &cond, schedule, &spec, Some(&depths), &mut stats)
            .unwrap();
    to_unit_range(&out)
}

fn mean_psnr_vs(fx: &Fixture, schedule: &TimestepSchedule, depth: usize, count: usize, reference: &[Vec<f32>]) -> f64 {
    use rayon::prelude::*;
    let psnrs: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|i| {
            let out = sample_val_item(fx, i, schedule, depth);
            psnr_db(mse(&out, &reference[i]).unwrap())
        })
        .collect();
    psnrs.iter().sum::<f64>() / count as f64
}

fn reference_outputs(fx: &Fixture, count: usize) -> Vec<Vec<f32>> {
    use rayon::prelude::*;
    let sched = uniform_schedule(fx.cfg.eval_n_ref, fx.cfg.t_total - 1).unwrap();
    let d_max = fx.model.config.d_max();
    (0..count).into_par_iter().map(|i| sample_val_item(fx, i, &sched, d_max)).collect()
}

// ---------------------------------------------------------------------------

#[test]
fn crit01_schedule_algebra() {
    let t0 = Instant::now();
    let gammas = [0.25, 0.322, 0.4, 0.5, 0.7, 0.9, 1.0, 1.1, 1.3, 1.6, 1.9, 2.0, 2.5, 3.0];
    let ns = [2usize, 3, 5, 8, 16, 50];
    let alphas = [0.0, 10.0, 30.0];
    let t_max = 999usize;
    let mut points = 0usize;
    let mut max_dev: f64 = 0.0;
    for &g in &gammas {
        for &n in &ns {
            for &a in &alphas {
                let spec = GammaSpec::new(g, n, t_max, a).unwrap();
                let plain = gamma_curve(&spec).unwrap();
                let scaled = scaled_gamma_curve(&spec).unwrap();
                // independent closed-form evaluation
                let t = t_max as f64;
                for i in 0..n {
                    let u = i as f64 / (n - 1) as f64;
                    let want_plain = t * u.powf(g);
                    let (tl, tu) = if g >= 1.0 {
                        (0.0, t + a * (g - 1.0))
                    } else {
                        (a * (1.0 - 1.0 / g), t)
                    };
                    let want_scaled = t * ((t * u - tl) / (tu - tl)).powf(g);
                    max_dev = max_dev.max((plain[i] - want_plain).abs());
                    max_dev = max_dev.max((scaled[i] - want_scaled).abs());
                }
                // density direction and endpoints on the scaled curve
                if g > 1.0 && n >= 3 {
                    assert!(scaled[1] - scaled[0] < scaled[n - 1] - scaled[n - 2]);
                    if a > 0.0 {
                        assert!(scaled[n - 1] < t);
                    }
                } else if g < 1.0 && n >= 3 {
                    assert!(scaled[1] - scaled[0] > scaled[n - 1] - scaled[n - 2]);
                    if a > 0.0 {
                        assert!(scaled[0] > 0.0);
                    }
                }
                points += n;
            }
        }
    }
    assert!(points >= 200, "grid has {points} points");
    // continuity at gamma = 1
    for &a in &alphas {
        let lo = scaled_gamma_curve(&GammaSpec::new(1.0 - 1e-9, 9, t_max, a).unwrap()).unwrap();
        let hi = scaled_gamma_curve(&GammaSpec::new(1.0 + 1e-9, 9, t_max, a).unwrap()).unwrap();
        let mid = gamma_curve(&GammaSpec::new(1.0, 9, t_max, a).unwrap()).unwrap();
        for i in 0..9 {
            assert!((lo[i] - mid[i]).abs() < 1e-5 && (hi[i] - mid[i]).abs() < 1e-5);
        }
    }
    let dt = t0.elapsed();
    assert!(max_dev < 1e-9, "closed-form deviation {max_dev}");
    assert!(dt.as_secs_f64() < 1.0, "runtime {dt:?}");
    println!(
        "[criterion 1] schedule algebra: PASS (max deviation {max_dev:.2e} over {points} grid points, {:.0} ms)",
        dt.as_secs_f64() * 1000.0
    );
}

#[test]
fn crit02_gradient_correctness() {
    let t0 = Instant::now();
    let cfg = fast_cfg();
    let sched = linear_beta_schedule(cfg.t_total).unwrap();
    let unet = cfg.unet();
    let d_max = unet.d_max();
    // full-depth check, 32 probes
    let model = DenoiserModel::<f64>::build(unet.clone(), cfg.seed_init()).unwrap();
    let mut frag = UNetLossFragment::seeded(model, sched.clone(), 5);
    let report = grad_check(&mut frag, 32, 1e-5, 99).unwrap();
    assert!(report.max_rel_err < 1e-4, "full-depth max rel err {}", report.max_rel_err);
    // bypassed parameters receive exactly zero gradient at every depth
    let mut pruned_worst = 0.0f64;
    for depth in 1..d_max {
        let mut model = DenoiserModel::<f64>::build(unet.clone(), cfg.seed_init()).unwrap();
        model.set_active_depth(depth).unwrap();
        let mut frag = UNetLossFragment::seeded(model, sched.clone(), 5 + depth as u64);
        let (_, grads) = frag.loss_and_grads().unwrap();
        for (name, p) in &frag.model.params {
            if p.depth > depth {
                assert!(
                    !grads.contains_key(name),
                    "depth {depth}: bypassed {name} received a gradient"
                );
            }
        }
        // spot finite-difference check on the pruned path
        if depth == d_max - 2 {
            let report = grad_check(&mut frag, 32, 1e-5, 7).unwrap();
            pruned_worst = report.max_rel_err;
            assert!(report.max_rel_err < 1e-4, "pruned max rel err {}", report.max_rel_err);
        }
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 120.0, "runtime {dt:?}");
    println!(
        "[criterion 2] gradient correctness: PASS (full {:.2e}, pruned {:.2e}, bypassed grads exactly zero at depths 1..{}, {:.1} s)",
        report.max_rel_err, pruned_worst, d_max - 1, dt.as_secs_f64()
    );
}

#[test]
fn crit03_sampler_contracts() {
    let t0 = Instant::now();
    let cfg = load_config(
        "image_size = 8\nunet.base_channels = 4\nunet.channel_mults = 1,2\nunet.time_embed_dim = 8\n\
         data.train_count = 16\ndata.val_count = 4\nsearch.ts.batch = 3\nsearch.ts.n = 4\nsearch.ts.n_ref = 12\n",
        &[],
    )
    .unwrap();
    let noise = linear_beta_schedule(cfg.t_total).unwrap();
    let model = build_model::<f32>(&cfg).unwrap();
    // eta = 0 bit-determinism on a real model
    let (cond, _) = skipstep::pipeline::train::val_pair::<f32>(&cfg, 0).unwrap();
    let sched = uniform_schedule(6, cfg.t_total - 1).unwrap();
    let spec = SamplerSpec { eta: 0.0, guidance: 1.0, noise_seed: 11 };
    let mut s1 = SampleStats::default();
    let a = ddim_sample(&model, &noise, &cond, &sched, &spec, None, &mut s1).unwrap();
    let mut s2 = SampleStats::default();
    let b = ddim_sample(&model, &noise, &cond, &sched, &spec, None, &mut s2).unwrap();
    assert_eq!(a, b, "eta=0 sampling must be bit-identical");
    assert_eq!(s1.model_calls, 6);
    // one-step oracle inversion
    struct Inv {
        x0: Vec<f64>,
        sched: NoiseSchedule,
    }
    impl NoisePredictor<f64> for Inv {
        fn x_numel(&self) -> usize {
            self.x0.len()
        }
        fn predict(
            &self,
            x: &[f64],
            _: &[f64],
            t: usize,
            _: usize,
            _: Option<usize>,
        ) -> skipstep::Result<Vec<f64>> {
            let abar = self.sched.alpha_bars[t];
            Ok(x.iter()
                .zip(&self.x0)
                .map(|(&xv, &x0v)| (xv - abar.sqrt() * x0v) / (1.0 - abar).sqrt())
                .collect())
        }
    }
    let sched64 = linear_beta_schedule(1000).unwrap();
    let x0: Vec<f64> = rng::normal_vec(&mut rng::stream(5, "x0"), 48)
        .into_iter()
        .map(|v: f64| (0.4 * v).clamp(-1.0, 1.0))
        .collect();
    let inv = Inv { x0: x0.clone(), sched: sched64.clone() };
    let one_step = discretize(&[999.0], 999).unwrap();
    let mut stats = SampleStats::default();
    let out = ddim_sample(&inv, &sched64, &[], &one_step, &SamplerSpec::default(), None, &mut stats)
        .unwrap();
    let max_err = out
        .iter()
        .zip(&x0)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(max_err < 1e-4, "one-step inversion error {max_err}");
    // invocation accounting on a real search run (both guidance modes)
    for w in [1.0, 1.5] {
        let out = run_ts_search(&model, &noise, &cfg, w).unwrap();
        assert_eq!(
            out.report.sampler_calls, out.report.expected_calls,
            "instrumented vs analytic at w={w}"
        );
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 60.0, "runtime {dt:?}");
    println!(
        "[criterion 3] sampler contracts: PASS (bit-determinism, inversion err {max_err:.1e}, accounting exact at w=1 and w=1.5, {:.1} s)",
        dt.as_secs_f64()
    );
}

#[test]
fn crit04_search_vs_oracle() {
    let t0 = Instant::now();
    // synthetic unimodal distance oracles with known minimizers
    struct Oracle {
        center: f64,
        cfg: TsSearchConfig,
        calls: u64,
    }
    impl GammaSampler for Oracle {
        type Output = f64;
        fn sample(&mut self, gamma: f64) -> skipstep::Result<f64> {
            self.calls += (self.cfg.batch * self.cfg.n) as u64;
            Ok(gamma)
        }
        fn reference(&mut self) -> skipstep::Result<f64> {
            self.calls += (self.cfg.batch * self.cfg.n_ref) as u64;
            Ok(self.center)
        }
        fn distance(&self, a: &f64, b: &f64) -> f64 {
            (a - b) * (a - b)
        }
        fn sampler_calls(&self) -> u64 {
            self.calls
        }
    }
    let base = TsSearchConfig { batch: 4, ..TsSearchConfig::default() };
    for refine in [false, true] {
        let tol = if refine { base.eta_step / 5.0 } else { base.eta_step };
        for center in [0.4, 0.7, 1.0, 1.3, 2.0] {
            let cfg = TsSearchConfig { refine, ..base.clone() };
            let mut o = Oracle { center, cfg: cfg.clone(), calls: 0 };
            let out = ts_optimize(&mut o, &cfg).unwrap();
            assert!(
                (out.gamma_star - center).abs() <= tol + 1e-9,
                "refine={refine} center {center}: got {}",
                out.gamma_star
            );
            assert_eq!(out.report.sampler_calls, out.report.expected_calls);
        }
    }
    // depth search equals exhaustive scan on stubbed tables
    struct Table {
        q: Vec<f64>,
    }
    impl DepthQualityProber for Table {
        fn quality(&mut self, depth: usize) -> skipstep::Result<f64> {
            Ok(self.q[depth - 1])
        }
    }
    for seed in 0..50u64 {
        use rand::Rng;
        let mut r = rng::stream(seed, "crit4");
        let d_max = 5 + (seed % 5) as usize;
        let mut q = vec![0.0; d_max - 1];
        let mut cur = 40.0;
        for d in (0..d_max - 1).rev() {
            cur -= r.random_range(0.0..8.0);
            q[d] = cur;
        }
        let threshold = r.random_range(10.0..40.0);
        let mut p = Table { q: q.clone() };
        let got = depth_search(&mut p, &DepthSearchConfig { d_max, threshold, batch: 1, n_ref: 50 })
            .unwrap();
        let exhaustive =
            (1..=d_max).find(|&d| d == d_max || q[d - 1] >= threshold).unwrap();
        assert_eq!(got.d_star, exhaustive, "seed {seed}, q {q:?}, thr {threshold}");
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 10.0, "runtime {dt:?}");
    println!(
        "[criterion 4] search vs oracle: PASS (5 minimizers x refine on/off within tolerance, 50 stub tables exact, {:.2} s)",
        dt.as_secs_f64()
    );
}

#[test]
fn crit05_end_to_end_compression_benefit() {
    let fx = fixture();
    let t0 = Instant::now();
    let count = 200usize;
    let reference = reference_outputs(fx, count);
    let d_max = fx.model.config.d_max();
    let mut lines = Vec::new();
    let mut pass = true;
    let mut details = Vec::new();
    for (n, margin) in [(5usize, 0.3f64), (10, 0.1)] {
        let mut cfg = fx.cfg.clone();
        cfg.ts_n = n;
        let outcome = run_ts_search(&fx.model, &fx.noise, &cfg, 1.0).unwrap();
        let uniform = uniform_schedule(n, cfg.t_total - 1).unwrap();
        let p_uni = mean_psnr_vs(fx, &uniform, d_max, count, &reference);
        let p_opt = mean_psnr_vs(fx, &outcome.schedule, d_max, count, &reference);
        let ok = p_opt >= p_uni + margin;
        pass &= ok;
        details.push(format!(
            "n={n}: gamma*={:.3}, uniform {:.3} dB, optimized {:.3} dB, gain {:+.3} (need >= {margin})",
            outcome.gamma_star,
            p_uni,
            p_opt,
            p_opt - p_uni
        ));
        lines.push(ok);
    }
    let minutes = fx.train_minutes + t0.elapsed().as_secs_f64() / 60.0;
    assert!(minutes < 45.0, "runtime {minutes:.1} min including training");
    for d in &details {
        println!("[criterion 5]   {d}");
    }
    assert!(pass, "compression benefit not met: {details:?}");
    println!(
        "[criterion 5] end-to-end compression benefit: PASS over {count} validation images ({minutes:.1} min incl. training)"
    );
}

#[test]
fn crit06_task_dependent_bias_direction() {
    let t0 = Instant::now();
    let mut restore_hits = 0;
    let mut structgen_hits = 0;
    let mut itemized = Vec::new();
    for seed in 1..=5u64 {
        for task in ["restore", "structgen"] {
            let mut cfg = load_config(&format!("task = {task}\n"), &[]).unwrap();
            cfg.override_master_seed(seed);
            cfg.train_steps = QUICK_TRAIN_STEPS;
            cfg.ts_batch = QUICK_SEARCH_BATCH;
            let noise = linear_beta_schedule(cfg.t_total).unwrap();
            let mut model = build_model::<f32>(&cfg).unwrap();
            train_model(&mut model, &noise, &cfg).unwrap();
            let outcome = run_ts_search(&model, &noise, &cfg, 1.0).unwrap();
            let g = outcome.gamma_star;
            let ok = match task {
                "restore" => g > 1.0,
                _ => g < 1.0,
            };
            if ok {
                if task == "restore" {
                    restore_hits += 1;
                } else {
                    structgen_hits += 1;
                }
            }
            itemized.push(format!("seed {seed} {task}: gamma* = {g:.3} ({})", if ok { "ok" } else { "MISS" }));
        }
    }
    for line in &itemized {
        println!("[criterion 6]   {line}");
    }
    let dt = t0.elapsed().as_secs_f64() / 60.0;
    assert!(
        restore_hits >= 3 && structgen_hits >= 3,
        "bias direction: restore {restore_hits}/5 (> 1), structgen {structgen_hits}/5 (< 1)"
    );
    println!(
        "[criterion 6] task-dependent bias direction: PASS (restore {restore_hits}/5 above 1, structgen {structgen_hits}/5 below 1, {dt:.1} min)"
    );
}

/// Reduced bring-up budget for the 10 training runs of criterion 6.
const QUICK_TRAIN_STEPS: usize = 1200;
const QUICK_SEARCH_BATCH: usize = 48;

#[test]
fn crit07_depth_skip_viability() {
    let fx = fixture();
    let t0 = Instant::now();
    let run = run_depth_search(&fx.model, &fx.noise, &fx.cfg).unwrap();
    let d_max = fx.model.config.d_max();
    let d_star = run.outcome.d_star;
    let frac = param_count_at_depth(&fx.model.config, d_star) as f64 / fx.model.param_count() as f64;
    println!(
        "[criterion 7]   d* = {d_star} of {d_max} (threshold {:.2} dB, floor {:?}), params retained {:.1}%",
        run.threshold,
        run.floor.map(|f| format!("{f:.2}")),
        frac * 100.0
    );
    assert!(d_star < d_max, "depth search found no pruning opportunity");
    assert!(frac < 0.8, "pruned parameter fraction {frac}");
    // fine-tuning recovers quality one level below d*
    let d_ft = d_star - 1;
    let count = 96usize;
    let reference = reference_outputs(fx, count);
    let probe = uniform_schedule(fx.cfg.eval_n_ref, fx.cfg.t_total - 1).unwrap();
    let before = mean_psnr_vs(fx, &probe, d_ft, count, &reference);
    let mut tuned = fx.model.clone();
    let (_log, warn) = finetune_model(&mut tuned, &fx.noise, &fx.cfg, d_ft).unwrap();
    assert!(warn.is_none());
    let tuned_fx = Fixture {
        cfg: fx.cfg.clone(),
        noise: fx.noise.clone(),
        model: tuned,
        train_minutes: 0.0,
    };
    let after = mean_psnr_vs(&tuned_fx, &probe, d_ft, count, &reference);
    let recovery = after - before;
    let minutes = t0.elapsed().as_secs_f64() / 60.0;
    println!(
        "[criterion 7]   fine-tune at d*-1 = {d_ft}: {before:.3} -> {after:.3} dB (recovery {recovery:+.3}, need >= 0.2)"
    );
    assert!(recovery >= 0.2, "fine-tune recovery {recovery}");
    assert!(minutes < 30.0, "runtime {minutes:.1} min beyond training");
    println!("[criterion 7] depth-skip viability: PASS ({minutes:.1} min beyond training)");
}

#[test]
fn crit08_single_vs_multi_depth() {
    let fx = fixture();
    let t0 = Instant::now();
    let run = run_multi_depth(&fx.model, &fx.noise, &fx.cfg).unwrap();
    assert_eq!(run.rows.len(), 27, "|D|=3, n=6, g=2 gives 27 configurations");
    // soft finding: at a fixed max-depth budget the all-same row is near the
    // best row (reported, not asserted)
    for &d in &fx.cfg.multi_depths {
        let all_same = run
            .rows
            .iter()
            .find(|r| r.is_constant_depth() && r.max_depth() == d)
            .expect("constant row exists");
        let best = run
            .rows
            .iter()
            .filter(|r| r.max_depth() == d)
            .map(|r| r.psnr)
            .fold(f64::NEG_INFINITY, f64::max);
        let gap = best - all_same.psnr;
        let verdict = if gap <= 0.1 { "within" } else { "OUTSIDE" };
        println!(
            "[criterion 8]   max-depth {d}: all-same {:.3} dB vs best {:.3} dB (gap {gap:.3}, soft bound 0.1, {verdict})",
            all_same.psnr, best
        );
    }
    // asserted finding: quality gains in regime (b) and MAC gains in regime
    // (c) require a parameter proxy at least as large, and strictly larger
    // for quality gains
    for c in &run.comparisons {
        if let Some(b) = &c.fix_mac_max_quality {
            if b.d_psnr > 1e-9 {
                assert!(
                    b.d_param_pct > 0.0,
                    "baseline {}: quality gain {:.3} dB at param delta {:.2}%",
                    c.depth,
                    b.d_psnr,
                    b.d_param_pct
                );
            }
        }
        if let Some(cc) = &c.fix_quality_min_mac {
            if cc.d_mac_pct < -1e-9 {
                assert!(
                    cc.d_param_pct >= 0.0,
                    "baseline {}: MAC gain {:.2}% at smaller params {:.2}%",
                    c.depth,
                    cc.d_mac_pct,
                    cc.d_param_pct
                );
            }
        }
    }
    let minutes = t0.elapsed().as_secs_f64() / 60.0;
    assert!(minutes < 20.0, "runtime {minutes:.1} min");
    println!(
        "[criterion 8] single- vs multi-depth analysis: PASS (27 rows, regime gains priced in parameters, {minutes:.1} min)"
    );
}

#[test]
fn crit09_parameter_profile() {
    let t0 = Instant::now();
    let cfg = UNetConfig::default();
    let profile = depth_profile(&cfg);
    let d_max = cfg.d_max();
    let deep_start = d_max - d_max.div_ceil(2) + 1;
    let deep: u64 = profile.rows[deep_start - 1..].iter().map(|r| r.params).sum();
    let total: u64 = profile.rows.iter().map(|r| r.params).sum();
    let frac = deep as f64 / total as f64;
    assert!(frac > 0.5, "deepest half fraction {frac}");
    // independent counting script over the documented name table
    let model = DenoiserModel::<f32>::build(cfg.clone(), 0).unwrap();
    let mut by_depth = vec![0u64; d_max + 1];
    for p in model.params.values() {
        by_depth[p.depth] += p.tensor.numel() as u64;
    }
    for (row, depth) in profile.rows.iter().zip(1..=d_max) {
        assert_eq!(row.params, by_depth[depth], "depth {depth} count");
    }
    assert_eq!(total, model.param_count());
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 1.0);
    println!(
        "[criterion 9] parameter profile: PASS (deepest {} of {d_max} levels hold {:.1}% of {} params, {:.0} ms)",
        d_max.div_ceil(2),
        frac * 100.0,
        total,
        dt.as_secs_f64() * 1000.0
    );
}

#[test]
fn crit10_persistence_and_reproducibility() {
    let t0 = Instant::now();
    // checkpoint round-trip at both precisions
    let cfg = fast_cfg();
    let model = build_model::<f32>(&cfg).unwrap();
    let bytes = skipstep::pipeline::checkpoint::serialize(&model);
    let loaded: DenoiserModel<f32> =
        skipstep::pipeline::checkpoint::deserialize(&bytes).unwrap();
    assert_eq!(bytes, skipstep::pipeline::checkpoint::serialize(&loaded));
    // reduced-budget full pipeline, twice, byte-compared: train -> ts-search
    // -> depth-search -> evaluate -> manifests
    let run_once = || -> Vec<String> {
        let mut cfg = fast_cfg();
        cfg.train_steps = 60;
        cfg.train_batch = 4;
        cfg.ts_batch = 6;
        cfg.ts_n = 3;
        cfg.ts_n_ref = 10;
        cfg.depth_batch = 4;
        cfg.depth_n_ref = 8;
        cfg.eval_n_ref = 8;
        let noise = linear_beta_schedule(cfg.t_total).unwrap();
        let mut model = build_model::<f32>(&cfg).unwrap();
        let log = train_model(&mut model, &noise, &cfg).unwrap();
        let ts = run_ts_search(&model, &noise, &cfg, 1.0).unwrap();
        let ds = run_depth_search(&model, &noise, &cfg).unwrap();
        let sched = uniform_schedule(3, cfg.t_total - 1).unwrap();
        let eval = skipstep::pipeline::evaluate::evaluate_schedule(
            &model, &noise, &cfg, &sched, model.config.d_max(), 4,
        )
        .unwrap();
        vec![
            hex_digest(&skipstep::pipeline::checkpoint::serialize(&model)),
            log.to_csv(),
            ts.report.to_manifest(),
            ts.report.to_csv(),
            format!("{}", ds.outcome.report.to_manifest()),
            eval.to_csv(),
        ]
    };
    let a = run_once();
    let b = run_once();
    assert_eq!(a, b, "pipeline rerun under one seed must be byte-identical");
    let dt = t0.elapsed();
    println!(
        "[criterion 10] persistence and reproducibility: PASS (checkpoint round-trip bit-exact; full reduced pipeline rerun byte-identical across {} artifacts, {:.1} s)",
        a.len(),
        dt.as_secs_f64()
    );
}

fn hex_digest(bytes: &[u8]) -> String {
    // tiny stable digest for comparing large artifacts in failure output
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("fnv:{h:016x}:{}", bytes.len())
}
