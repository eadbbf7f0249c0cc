//! End-to-end CLI contract tests over the built binary: exit codes, file
//! outputs, overwrite protection, and rerun determinism of a miniature
//! pipeline.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_skipstep")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("skipstep-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

/// Mini architecture flags shared by the pipeline tests.
fn mini(args: &mut Vec<String>) {
    for kv in [
        "image_size=8",
        "unet.base_channels=4",
        "unet.channel_mults=1,2",
        "unet.time_embed_dim=8",
        "t_total=200",
        "data.train_count=24",
        "data.val_count=8",
        "train.steps=6",
        "train.batch=2",
        "train.log_every=3",
        "eval.n_ref=6",
        "eval.count=4",
        "search.ts.n=3",
        "search.ts.n_ref=6",
        "search.ts.batch=2",
    ] {
        args.push("--set".to_string());
        args.push(kv.to_string());
    }
}

fn run_mini(subcmd: &[&str], out: &Path, extra: &[&str]) -> Output {
    let mut args: Vec<String> = subcmd.iter().map(|s| s.to_string()).collect();
    args.push("--out".to_string());
    args.push(out.display().to_string());
    mini(&mut args);
    for e in extra {
        args.push(e.to_string());
    }
    Command::new(bin()).args(&args).output().expect("binary runs")
}

#[test]
fn usage_errors_exit_one() {
    // unknown flag
    let out = run(&["train", "--out", "/tmp/x", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    // unknown config key, named in the message
    let out = run(&["train", "--out", "/tmp/x", "--set", "train.stepz=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.stepz"));
    // missing config file, named in the message
    let out = run(&["train", "--out", "/tmp/x", "--config", "/tmp/definitely-missing.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("definitely-missing.cfg"));
    // malformed --set
    let out = run(&["train", "--out", "/tmp/x", "--set", "oops"]);
    assert_eq!(out.status.code(), Some(1));
    // bad schedule string
    let dir = tmp("sched");
    let out = run_mini(&["evaluate", "--ckpt", "/tmp/none.bin", "--schedule", "banana:5"], &dir, &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["gen-data", "train", "finetune", "sample", "ts-search", "depth-search", "multi-depth", "profile", "evaluate", "report"] {
        assert!(text.contains(sub), "help lists {sub}");
    }
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tmp("rt");
    // checkpoint missing at a valid config: runtime error
    let out = run_mini(&["ts-search", "--ckpt", "/tmp/none.bin"], &dir, &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn profile_writes_the_documented_schema() {
    let dir = tmp("profile");
    let out = run_mini(&["profile"], &dir, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("depth_profile.csv")).unwrap();
    assert!(csv.starts_with("depth,param_count,param_cum_frac,mac_count,mac_cum_frac\n"));
    // mini net: 2 levels x 2 blocks + middle = 5 depths
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn overwrite_needs_force() {
    let dir = tmp("force");
    let out = run_mini(&["gen-data"], &dir, &[]);
    assert_eq!(out.status.code(), Some(0));
    let out = run_mini(&["gen-data"], &dir, &[]);
    assert_eq!(out.status.code(), Some(2), "rerun without --force must fail");
    assert!(String::from_utf8_lossy(&out.stderr).contains("--force"));
    let out = run_mini(&["gen-data"], &dir, &["--force"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn mini_pipeline_rerun_is_byte_identical() {
    let dir_a = tmp("pipe-a");
    let dir_b = tmp("pipe-b");
    for dir in [&dir_a, &dir_b] {
        let out = run_mini(&["train"], dir, &["--seed", "7"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let ckpt = dir.join("checkpoint.bin").display().to_string();
        let out = run_mini(&["ts-search", "--ckpt", &ckpt], dir, &["--seed", "7"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let out = run_mini(
            &["evaluate", "--ckpt", &ckpt, "--schedule", "uniform:3", "--count", "2"],
            dir,
            &["--seed", "7"],
        );
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let out = run(&["report", "--run", &dir.display().to_string()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    // every manifest, csv, checkpoint and image byte-matches across reruns
    let mut compared = 0;
    for entry in walk(&dir_a) {
        let rel = entry.strip_prefix(&dir_a).unwrap();
        let other = dir_b.join(rel);
        let a = std::fs::read(&entry).unwrap();
        let b = std::fs::read(&other).unwrap_or_else(|_| panic!("missing {}", other.display()));
        assert_eq!(a, b, "{} differs between reruns", rel.display());
        compared += 1;
    }
    assert!(compared >= 8, "expected a populated run directory, saw {compared} files");
    let _ = std::fs::remove_dir_all(&dir_a);
    let _ = std::fs::remove_dir_all(&dir_b);
}

#[test]
fn resume_for_zero_steps_reproduces_the_checkpoint() {
    let dir = tmp("resume");
    let out = run_mini(&["train"], &dir, &["--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let ckpt = dir.join("checkpoint.bin");
    let resumed = tmp("resume2");
    let out = run_mini(
        &["train", "--resume", &ckpt.display().to_string()],
        &resumed,
        &["--seed", "3", "--set", "train.steps=0"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let a = std::fs::read(&ckpt).unwrap();
    let b = std::fs::read(resumed.join("checkpoint.bin")).unwrap();
    assert_eq!(a, b, "zero-step resume must be bit-identical");
    let _ = std::fs::remove_dir_all(&dir);
    let _ = std::fs::remove_dir_all(&resumed);
}

#[test]
fn report_consolidates_eval_rows() {
    let dir = tmp("report");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(
        dir.join("eval_uniform_5.csv"),
        "index,mse_ref,psnr_ref,mse_target,psnr_target\n0,0.01,20,0.02,17\n",
    )
    .unwrap();
    let out = run(&["report", "--run", &dir.display().to_string()]);
    assert_eq!(out.status.code(), Some(0));
    let summary = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert!(summary.contains("5,uniform,20,17,1,0,"), "{summary}");
    let text = std::fs::read_to_string(dir.join("summary.txt")).unwrap();
    assert!(text.contains("uniform"));
    let _ = std::fs::remove_dir_all(&dir);
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let mut entries: Vec<_> =
            std::fs::read_dir(&d).unwrap().filter_map(|e| e.ok()).map(|e| e.path()).collect();
        entries.sort();
        for e in entries {
            if e.is_dir() {
                stack.push(e);
            } else {
                files.push(e);
            }
        }
    }
    files
}
