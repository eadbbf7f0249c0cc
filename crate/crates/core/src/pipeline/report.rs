//! Consolidated run report: one CSV plus a plain-text table over every
//! evaluation and search artifact found in a run directory.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::io::Manifest;

#[derive(Clone, Debug)]
pub struct ReportRow {
    pub steps: usize,
    pub method: String,
    pub mean_psnr_ref: f64,
    pub mean_psnr_target: f64,
    pub images: usize,
    /// Sampler invocations spent searching for this schedule (0 = none).
    pub search_calls: u64,
    pub gamma: Option<f64>,
}

fn mean_psnr_from_eval_csv(text: &str) -> Result<(f64, f64, usize)> {
    let mut psnr_ref = 0.0;
    let mut psnr_tgt = 0.0;
    let mut n = 0usize;
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "index,mse_ref,psnr_ref,mse_target,psnr_target" {
                return Err(Error::InvalidArg(format!("unexpected eval CSV header {line:?}")));
            }
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::InvalidArg(format!("bad eval CSV row {line:?}")));
        }
        psnr_ref += cols[2].parse::<f64>().map_err(|_| Error::InvalidArg("bad psnr".into()))?;
        psnr_tgt += cols[4].parse::<f64>().map_err(|_| Error::InvalidArg("bad psnr".into()))?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidArg("empty eval CSV".to_string()));
    }
    Ok((psnr_ref / n as f64, psnr_tgt / n as f64, n))
}

/// Parse `eval_<method>_<steps>.csv` names.
fn parse_eval_name(name: &str) -> Option<(String, usize)> {
    let stem = name.strip_prefix("eval_")?.strip_suffix(".csv")?;
    let (method, steps) = stem.rsplit_once('_')?;
    Some((method.to_string(), steps.parse().ok()?))
}

/// Scan a run directory and consolidate evaluations with the search costs
/// recorded in its manifests.
pub fn consolidate(run_dir: &Path) -> Result<(String, String)> {
    let mut entries: Vec<String> = std::fs::read_dir(run_dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    entries.sort();
    // search manifests: map steps -> (calls, gamma)
    let mut searches: Vec<(usize, u64, f64)> = Vec::new();
    for name in entries.iter().filter(|n| n.starts_with("ts_search") && n.ends_with("manifest.txt")) {
        let m = Manifest::load(&run_dir.join(name))?;
        let calls: u64 = m.get("sampler_calls").and_then(|v| v.parse().ok()).unwrap_or(0);
        let gamma: f64 = m.get("chosen").and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
        let steps = m
            .get("config")
            .and_then(|c| c.split_whitespace().find_map(|tok| tok.strip_prefix("n=")?.parse().ok()))
            .unwrap_or(0);
        searches.push((steps, calls, gamma));
    }
    let mut rows: Vec<ReportRow> = Vec::new();
    for name in entries.iter().filter(|n| n.starts_with("eval_") && n.ends_with(".csv")) {
        let Some((method, steps)) = parse_eval_name(name) else { continue };
        let text = std::fs::read_to_string(run_dir.join(name))?;
        let (psnr_ref, psnr_tgt, images) = mean_psnr_from_eval_csv(&text)?;
        let (search_calls, gamma) = if method == "gamma" {
            searches
                .iter()
                .find(|(s, _, _)| *s == steps)
                .map(|(_, c, g)| (*c, Some(*g)))
                .unwrap_or((0, None))
        } else {
            (0, None)
        };
        rows.push(ReportRow {
            steps,
            method,
            mean_psnr_ref: psnr_ref,
            mean_psnr_target: psnr_tgt,
            images,
            search_calls,
            gamma,
        });
    }
    rows.sort_by(|a, b| (a.steps, &a.method).cmp(&(b.steps, &b.method)));
    let mut csv = String::from("steps,method,mean_psnr_ref,mean_psnr_target,images,search_sampler_calls,gamma\n");
    for r in &rows {
        let gamma = r.gamma.map(|g| g.to_string()).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.steps, r.method, r.mean_psnr_ref, r.mean_psnr_target, r.images, r.search_calls, gamma
        );
    }
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:>5}  {:<8} {:>14} {:>14} {:>7} {:>16} {:>8}",
        "steps", "method", "PSNR(ref) dB", "PSNR(tgt) dB", "images", "search calls", "gamma"
    );
    for r in &rows {
        let gamma = r.gamma.map(|g| format!("{g:.3}")).unwrap_or_else(|| "-".to_string());
        let _ = writeln!(
            text,
            "{:>5}  {:<8} {:>14.3} {:>14.3} {:>7} {:>16} {:>8}",
            r.steps, r.method, r.mean_psnr_ref, r.mean_psnr_target, r.images, r.search_calls, gamma
        );
    }
    Ok((csv, text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consolidates_eval_files_and_search_manifests() {
        let dir = std::env::temp_dir().join(format!("skipstep-report-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(
            dir.join("eval_uniform_5.csv"),
            "index,mse_ref,psnr_ref,mse_target,psnr_target\n0,0.01,20,0.02,16.9\n1,0.01,22,0.02,17.1\n",
        )
        .unwrap();
        std::fs::write(
            dir.join("eval_gamma_5.csv"),
            "index,mse_ref,psnr_ref,mse_target,psnr_target\n0,0.005,23,0.02,17\n1,0.005,23,0.02,17\n",
        )
        .unwrap();
        std::fs::write(
            dir.join("ts_search_w1_manifest.txt"),
            "kind = ts-search\nchosen = 1.3\nsampler_calls = 5000\nconfig = n=5 N=50\n",
        )
        .unwrap();
        let (csv, text) = consolidate(&dir).unwrap();
        assert!(csv.contains("5,gamma,23,17,2,5000,1.3"), "{csv}");
        assert!(csv.contains("5,uniform,21,17,2,0,"), "{csv}");
        assert!(text.contains("gamma"));
        let _ = std::fs::remove_dir_all(&dir);
    }
}
