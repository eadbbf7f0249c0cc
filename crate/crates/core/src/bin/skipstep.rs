//! Command-line front end: dataset generation, training, the two compression
//! searches, sampling, evaluation, profiling, and run reports.
//!
//! Exit codes: 0 success, 1 usage error (bad flags, bad config, bad schedule
//! string), 2 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use skipstep::denoiser::{depth_profile, DenoiserModel};
use skipstep::diffusion::{linear_beta_schedule, NoiseSchedule};
use skipstep::error::{Error, Result};
use skipstep::pipeline::config::{load_config, load_config_file, RunConfig};
use skipstep::pipeline::io::{image_ext, write_image, write_text, Manifest};
use skipstep::pipeline::{checkpoint, evaluate, report, train};
use skipstep::schedule::{gamma_schedule, uniform_schedule, GammaSpec, TimestepSchedule};
use skipstep::search::pareto_to_text;
use skipstep::tasks::to_unit_range;

#[derive(Parser)]
#[command(name = "skipstep", version, about = "Toy conditional-diffusion compression lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key = value config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for this run.
    #[arg(long)]
    out: PathBuf,
    /// Master seed override; every derived stream moves with it.
    #[arg(long)]
    seed: Option<u64>,
    /// Config overrides, e.g. --set train.steps=500.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Allow overwriting files in the output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write the dataset manifest and sample images.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train the denoiser from scratch or from a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Resume from this checkpoint instead of a fresh init.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Fine-tune a pruned model at a given depth.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        /// Depth-skip level to fine-tune at.
        #[arg(long)]
        depth: usize,
    },
    /// Sample validation conditions through a schedule and dump images.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        /// `uniform:<steps>` or `gamma:<gamma>:<steps>`.
        #[arg(long)]
        schedule: String,
        #[arg(long, default_value_t = 8)]
        count: usize,
        /// Depth-skip level during sampling (default: full depth).
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Greedy gamma-schedule search (one run per configured guidance scale).
    TsSearch {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        /// Run the search on a depth-skipped model.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Depth-skip search against the per-run quality threshold.
    DepthSearch {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Exhaustive multi-depth enumeration and the three-regime comparison.
    MultiDepth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Per-depth parameter/MAC profile of the configured architecture.
    Profile {
        #[command(flatten)]
        common: Common,
        /// Profile this checkpoint's architecture instead of the config's.
        #[arg(long)]
        ckpt: Option<PathBuf>,
    },
    /// Evaluate a schedule over validation items against the reference.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        /// `uniform:<steps>` or `gamma:<gamma>:<steps>`.
        #[arg(long)]
        schedule: String,
        #[arg(long)]
        depth: Option<usize>,
        /// Validation items to evaluate (default: eval.count).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Consolidate a run directory into summary.csv and summary.txt.
    Report {
        /// Run directory holding eval CSVs and search manifests.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn parse_overrides(set: &[String]) -> Result<Vec<(String, String)>> {
    set.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::InvalidArg(format!("--set needs KEY=VALUE, got {s:?}")))
        })
        .collect()
}

fn resolve_config(common: &Common) -> Result<RunConfig> {
    let overrides = parse_overrides(&common.set)?;
    let mut cfg = match &common.config {
        Some(path) => load_config_file(path, &overrides)?,
        None => load_config("", &overrides)?,
    };
    if let Some(seed) = common.seed {
        cfg.override_master_seed(seed);
    }
    Ok(cfg)
}

fn parse_schedule(s: &str, cfg: &RunConfig) -> Result<(TimestepSchedule, String, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["uniform", n] => {
            let n: usize = n.parse().map_err(|_| Error::InvalidArg(format!("bad step count in {s:?}")))?;
            Ok((uniform_schedule(n, cfg.t_total - 1)?, "uniform".to_string(), n))
        }
        ["gamma", g, n] => {
            let g: f64 = g.parse().map_err(|_| Error::InvalidArg(format!("bad gamma in {s:?}")))?;
            let n: usize = n.parse().map_err(|_| Error::InvalidArg(format!("bad step count in {s:?}")))?;
            let spec = GammaSpec::new(g, n, cfg.t_total - 1, cfg.ts_alpha())?;
            Ok((gamma_schedule(&spec)?, "gamma".to_string(), n))
        }
        _ => Err(Error::InvalidArg(format!(
            "schedule must be uniform:<steps> or gamma:<g>:<steps>, got {s:?}"
        ))),
    }
}

fn base_manifest(cfg: &RunConfig, phase: &str) -> Manifest {
    let mut m = Manifest::new();
    m.push("build", skipstep::pipeline::build_id());
    m.push("phase", phase);
    m.push_block(&cfg.echo());
    m
}

fn load_model(path: &Path) -> Result<(DenoiserModel<f32>, NoiseSchedule)> {
    let model = checkpoint::load::<f32>(path)?;
    Ok((model, linear_beta_schedule(1000)?))
}

fn noise_for(cfg: &RunConfig) -> Result<NoiseSchedule> {
    linear_beta_schedule(cfg.t_total)
}

fn cmd_gen_data(common: &Common, cfg: &RunConfig) -> Result<()> {
    let out = &common.out;
    write_text(&out.join("dataset_manifest.csv"), &skipstep::pipeline::dataset_manifest(cfg), common.force)?;
    let dump = |split: &str, count: usize, offset: usize| -> Result<()> {
        for i in 0..count {
            let pair = skipstep::tasks::make_pair::<f32>(
                cfg.task,
                (offset + i) as u64,
                cfg.image_size,
                cfg.channels,
            )?;
            let dir = out.join("images").join(split);
            write_image(
                &dir.join(format!("{i:04}_target.{}", image_ext(cfg.channels))),
                &pair.target,
                cfg.channels,
                cfg.image_size,
                common.force,
            )?;
            write_image(
                &dir.join(format!("{i:04}_cond.{}", image_ext(cfg.cond_channels()))),
                &pair.cond,
                cfg.cond_channels(),
                cfg.image_size,
                common.force,
            )?;
        }
        Ok(())
    };
    dump("train", cfg.data_train_count.min(32), 0)?;
    dump("val", cfg.data_val_count.min(16), cfg.data_train_count)?;
    let mut m = base_manifest(cfg, "gen-data");
    m.push("dataset_manifest", "dataset_manifest.csv");
    m.write_to(&out.join("gen_data_manifest.txt"), common.force)?;
    println!("dataset manifest and sample images written to {}", out.display());
    Ok(())
}

fn cmd_train(common: &Common, cfg: &RunConfig, resume: Option<&Path>) -> Result<()> {
    let noise = noise_for(cfg)?;
    let mut model = match resume {
        Some(path) => checkpoint::load::<f32>(path)?,
        None => skipstep::pipeline::build_model::<f32>(cfg)?,
    };
    let log = train::train_model(&mut model, &noise, cfg)?;
    let out = &common.out;
    checkpoint::save(&model, &out.join("checkpoint.bin"), common.force)?;
    write_text(&out.join("train_loss.csv"), &log.to_csv(), common.force)?;
    let mut m = base_manifest(cfg, "train");
    if let Some(r) = resume {
        m.push("resumed_from", r.display());
    }
    m.push("param_count", model.param_count());
    m.push("d_max", model.config.d_max());
    m.push("train.first_window_loss", log.first_window_mean);
    m.push("train.last_window_loss", log.last_window_mean);
    m.push("checkpoint", "checkpoint.bin");
    m.write_to(&out.join("manifest.txt"), common.force)?;
    println!(
        "trained {} steps: loss {:.4} -> {:.4}; checkpoint at {}",
        log.steps,
        log.first_window_mean,
        log.last_window_mean,
        out.join("checkpoint.bin").display()
    );
    Ok(())
}

fn cmd_finetune(common: &Common, cfg: &RunConfig, ckpt: &Path, depth: usize) -> Result<()> {
    let (mut model, _) = load_model(ckpt)?;
    let noise = noise_for(cfg)?;
    let (log, warning) = train::finetune_model(&mut model, &noise, cfg, depth)?;
    let out = &common.out;
    let name = format!("checkpoint_ft_d{depth}.bin");
    checkpoint::save(&model, &out.join(&name), common.force)?;
    write_text(&out.join("finetune_loss.csv"), &log.to_csv(), common.force)?;
    let mut m = base_manifest(cfg, "finetune");
    m.push("source_checkpoint", ckpt.display());
    m.push("finetune.depth", depth);
    m.push("finetune.steps_run", log.steps);
    m.push("checkpoint", &name);
    if let Some(w) = &warning {
        m.push("warning", w);
    }
    m.write_to(&out.join("finetune_manifest.txt"), common.force)?;
    match warning {
        Some(w) => println!("warning: {w}"),
        None => println!("fine-tuned at depth {depth} for {} steps into {}", log.steps, name),
    }
    Ok(())
}

fn cmd_sample(
    common: &Common,
    cfg: &RunConfig,
    ckpt: &Path,
    schedule: &str,
    count: usize,
    depth: Option<usize>,
) -> Result<()> {
    let (model, _) = load_model(ckpt)?;
    let noise = noise_for(cfg)?;
    let (sched, method, steps) = parse_schedule(schedule, cfg)?;
    let depth = depth.unwrap_or(model.config.d_max());
    let out = &common.out;
    for i in 0..count.min(cfg.data_val_count) {
        let (cond_m, _) = train::val_pair::<f32>(cfg, i)?;
        let xt_seed = skipstep::rng::derive(cfg.seed_noise(), &format!("sample/{i}"));
        let spec = skipstep::diffusion::SamplerSpec { eta: cfg.ts_eta, guidance: 1.0, noise_seed: xt_seed };
        let mut stats = skipstep::diffusion::SampleStats::default();
        let depths = vec![depth; sched.len()];
        let img = skipstep::diffusion::ddim_sample(
            &model, &noise, &cond_m, &sched, &spec, Some(&depths), &mut stats,
        )?;
        let dir = out.join("samples");
        write_image(
            &dir.join(format!("{i:04}_out.{}", image_ext(cfg.channels))),
            &to_unit_range(&img),
            cfg.channels,
            cfg.image_size,
            common.force,
        )?;
        write_image(
            &dir.join(format!("{i:04}_cond.{}", image_ext(cfg.cond_channels()))),
            &to_unit_range(&cond_m),
            cfg.cond_channels(),
            cfg.image_size,
            common.force,
        )?;
    }
    let mut m = base_manifest(cfg, "sample");
    m.push("schedule", schedule);
    m.push("schedule.steps", sched.to_csv_line());
    m.push("method", &method);
    m.push("steps", steps);
    m.push("depth", depth);
    m.write_to(&out.join("sample_manifest.txt"), common.force)?;
    println!("wrote {} samples through {method}:{steps} at depth {depth}", count.min(cfg.data_val_count));
    Ok(())
}

fn guidance_tag(w: f64) -> String {
    format!("w{}", w.to_string().replace('.', "p"))
}

fn cmd_ts_search(common: &Common, cfg: &RunConfig, ckpt: &Path, depth: Option<usize>) -> Result<()> {
    let (mut model, _) = load_model(ckpt)?;
    if let Some(d) = depth {
        model.set_active_depth(d)?;
    }
    let noise = noise_for(cfg)?;
    let out = &common.out;
    for &w in &cfg.ts_guidance {
        let outcome = skipstep::pipeline::run_ts_search(&model, &noise, cfg, w)?;
        let tag = guidance_tag(w);
        write_text(&out.join(format!("ts_search_{tag}.csv")), &outcome.report.to_csv(), common.force)?;
        write_text(
            &out.join(format!("schedule_{tag}.csv")),
            &(outcome.schedule.to_csv_line() + "\n"),
            common.force,
        )?;
        let mut m = base_manifest(cfg, "ts-search");
        m.push("guidance", w);
        if let Some(d) = depth {
            m.push("search_depth", d);
        }
        m.push("gamma_star", outcome.gamma_star);
        m.push("schedule.steps", outcome.schedule.to_csv_line());
        m.push_block(&outcome.report.to_manifest());
        m.write_to(&out.join(format!("ts_search_{tag}_manifest.txt")), common.force)?;
        println!(
            "w = {w}: gamma* = {:.3}, schedule [{}], {} sampler calls",
            outcome.gamma_star,
            outcome.schedule.to_csv_line(),
            outcome.report.sampler_calls
        );
    }
    Ok(())
}

fn cmd_depth_search(common: &Common, cfg: &RunConfig, ckpt: &Path) -> Result<()> {
    let (model, _) = load_model(ckpt)?;
    let noise = noise_for(cfg)?;
    let run = skipstep::pipeline::run_depth_search(&model, &noise, cfg)?;
    let out = &common.out;
    write_text(&out.join("depth_search.csv"), &run.outcome.report.to_csv(), common.force)?;
    let mut m = base_manifest(cfg, "depth-search");
    m.push("d_star", run.outcome.d_star);
    m.push("threshold_db", run.threshold);
    if let Some(f) = run.floor {
        m.push("self_psnr_floor_db", f);
    }
    m.push("no_compression", run.outcome.no_compression);
    let frac = skipstep::denoiser::param_count_at_depth(&model.config, run.outcome.d_star) as f64
        / model.param_count() as f64;
    m.push("pruned_param_fraction", frac);
    m.push_block(&run.outcome.report.to_manifest());
    m.write_to(&out.join("depth_search_manifest.txt"), common.force)?;
    println!(
        "d* = {} (threshold {:.2} dB, retains {:.1}% of parameters)",
        run.outcome.d_star,
        run.threshold,
        frac * 100.0
    );
    Ok(())
}

fn cmd_multi_depth(common: &Common, cfg: &RunConfig, ckpt: &Path) -> Result<()> {
    let (model, _) = load_model(ckpt)?;
    let noise = noise_for(cfg)?;
    let run = skipstep::pipeline::run_multi_depth(&model, &noise, cfg)?;
    let out = &common.out;
    write_text(&out.join("multi_depth.csv"), &skipstep::pipeline::multi_depth_csv(&run.rows), common.force)?;
    write_text(&out.join("pareto.txt"), &pareto_to_text(&run.comparisons), common.force)?;
    let mut m = base_manifest(cfg, "multi-depth");
    m.push("rows", run.rows.len());
    m.push("sampler_calls", run.sampler_calls);
    m.write_to(&out.join("multi_depth_manifest.txt"), common.force)?;
    println!("{}", pareto_to_text(&run.comparisons));
    Ok(())
}

fn cmd_profile(common: &Common, cfg: &RunConfig, ckpt: Option<&Path>) -> Result<()> {
    let unet = match ckpt {
        Some(path) => checkpoint::load::<f32>(path)?.config,
        None => cfg.unet(),
    };
    let profile = depth_profile(&unet);
    write_text(&common.out.join("depth_profile.csv"), &profile.to_csv(), common.force)?;
    println!("{}", profile.to_csv());
    Ok(())
}

fn cmd_evaluate(
    common: &Common,
    cfg: &RunConfig,
    ckpt: &Path,
    schedule: &str,
    depth: Option<usize>,
    count: Option<usize>,
) -> Result<()> {
    let (model, _) = load_model(ckpt)?;
    let noise = noise_for(cfg)?;
    let (sched, method, steps) = parse_schedule(schedule, cfg)?;
    let depth = depth.unwrap_or(model.config.d_max());
    let count = count.unwrap_or(cfg.eval_count);
    let result = evaluate::evaluate_schedule(&model, &noise, cfg, &sched, depth, count)?;
    let out = &common.out;
    let tag = format!("{method}_{steps}");
    write_text(&out.join(format!("eval_{tag}.csv")), &result.to_csv(), common.force)?;
    let img_dir = out.join(format!("images_{tag}"));
    let names = ["cond", "out", "target", "ref"];
    for (i, group) in result.images.iter().enumerate() {
        for (j, img) in group.iter().enumerate() {
            let ch = if j == 0 { cfg.cond_channels() } else { cfg.channels };
            write_image(
                &img_dir.join(format!("{i:04}_{}.{}", names[j], image_ext(ch))),
                img,
                ch,
                cfg.image_size,
                common.force,
            )?;
        }
    }
    let q_ref = result.quality_vs_reference();
    let q_tgt = result.quality_vs_target();
    let mut m = base_manifest(cfg, "evaluate");
    m.push("schedule", schedule);
    m.push("schedule.steps", sched.to_csv_line());
    m.push("depth", depth);
    m.push("images", count);
    m.push("mean_psnr_ref_db", q_ref.mean_psnr);
    m.push("std_psnr_ref_db", q_ref.std_psnr);
    m.push("mean_psnr_target_db", q_tgt.mean_psnr);
    m.push("sampler_calls", result.sampler_calls);
    m.write_to(&out.join(format!("eval_{tag}_manifest.txt")), common.force)?;
    println!(
        "{tag}: PSNR vs reference {:.3} dB (std {:.3}), vs target {:.3} dB over {count} images",
        q_ref.mean_psnr, q_ref.std_psnr, q_tgt.mean_psnr
    );
    Ok(())
}

fn cmd_report(run: &Path, force: bool) -> Result<()> {
    let (csv, text) = report::consolidate(run)?;
    write_text(&run.join("summary.csv"), &csv, force)?;
    write_text(&run.join("summary.txt"), &text, force)?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> std::result::Result<(), (i32, Error)> {
    // config resolution problems are usage errors (exit 1); everything after
    // is a runtime error (exit 2)
    match cli.command {
        Command::GenData { common } => {
            let cfg = resolve_config(&common).map_err(|e| (1, e))?;
            cmd_gen_data(&common, &cfg).map_err(|e| (2, e))
        }
        Command::Train { common, resume } => {
            let cfg = resolve_config(&common).map_err(|e| (1, e))?;
            cmd_train(&common, &cfg, resume.as_deref()).map_err(|e| (2, e))
        }
        Command::Finetune { common, ckpt, depth } => {
            let cfg = resolve_config(&common).map_err(|e| (1, e))?;
            cmd_finetune(&common, &cfg, &ckpt, depth).map_err(|e| (2, e))
        }
        Command::Sample { common, ckpt, schedule, count, depth } => {
            let cfg = resolve_config(&common).map_err(|e| (1, e))?;
            parse_schedule(&schedule, &cfg).map_err(|e| (1, e))?;
            cmd_sample(&common, &cfg, &ckpt, &schedule, count, depth).map_err(|e| (2, e))
        }
        Command::TsSearch { common, ckpt, depth } => {
            let cfg = resolve_config(&common).map_err(|e| (1, e))?;
            cmd_ts_search(&common, &cfg, &ckpt, depth).map_err(|e| (2, e))
        }
        Command::DepthSearch { common, ckpt } => {
            let cfg = resolve_config(&common).map_err(|e| (1, e))?;
            cmd_depth_search(&common, &cfg, &ckpt).map_err(|e| (2, e))
        }
        Command::MultiDepth { common, ckpt } => {
            let cfg = resolve_config(&common).map_err(|e| (1, e))?;
            cmd_multi_depth(&common, &cfg, &ckpt).map_err(|e| (2, e))
        }
        Command::Profile { common, ckpt } => {
            let cfg = resolve_config(&common).map_err(|e| (1, e))?;
            cmd_profile(&common, &cfg, ckpt.as_deref()).map_err(|e| (2, e))
        }
        Command::Evaluate { common, ckpt, schedule, depth, count } => {
            let cfg = resolve_config(&common).map_err(|e| (1, e))?;
            parse_schedule(&schedule, &cfg).map_err(|e| (1, e))?;
            cmd_evaluate(&common, &cfg, &ckpt, &schedule, depth, count).map_err(|e| (2, e))
        }
        Command::Report { run, force } => cmd_report(&run, force).map_err(|e| (2, e)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, e)) => {
            eprintln!("error: {e}");
            ExitCode::from(code as u8)
        }
    }
}
