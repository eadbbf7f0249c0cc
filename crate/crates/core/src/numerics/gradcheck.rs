//! Central-difference verification of tape gradients. Runs in 64-bit mode;
//! the finite-difference side never touches the tape, so the two routes stay
//! independent.

use std::collections::HashMap;

use rand::Rng;

use crate::error::Result;
use crate::rng;

/// A differentiable scalar-loss fragment: some parameters plus a loss that is
/// a pure function of them (noise, data and timestep are frozen inside).
pub trait DiffFragment {
    /// Probe-eligible parameters as `(name, element count)`.
    fn param_names(&self) -> Vec<(String, usize)>;
    fn get(&self, name: &str, idx: usize) -> f64;
    fn set(&mut self, name: &str, idx: usize, v: f64);
    /// Forward-only loss evaluation.
    fn loss(&mut self) -> f64;
    /// Loss plus analytic gradients from the tape. Parameters absent from the
    /// map have zero gradient.
    fn loss_and_grads(&mut self) -> Result<(f64, HashMap<String, Vec<f64>>)>;
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub probed: usize,
    /// Worst probe as (name, flat index, analytic, finite-difference).
    pub worst: Option<(String, usize, f64, f64)>,
}

fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    // below this scale finite differences are cancellation noise; treat
    // absolute agreement as exact
    if denom < 1e-6 {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

/// Compare tape gradients against central differences on `probes` randomly
/// chosen parameter entries.
pub fn grad_check(
    frag: &mut impl DiffFragment,
    probes: usize,
    fd_step: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let names = frag.param_names();
    let total: usize = names.iter().map(|(_, n)| n).sum();
    let (_, grads) = frag.loss_and_grads()?;
    let mut rng = rng::stream(seed, "gradcheck");
    let mut report = GradCheckReport { max_rel_err: 0.0, probed: 0, worst: None };
    for _ in 0..probes {
        let mut flat = rng.random_range(0..total);
        let (name, idx) = names
            .iter()
            .find_map(|(n, len)| {
                if flat < *len {
                    Some((n.as_str(), flat))
                } else {
                    flat -= len;
                    None
                }
            })
            .expect("flat index in range");
        let orig = frag.get(name, idx);
        frag.set(name, idx, orig + fd_step);
        let up = frag.loss();
        frag.set(name, idx, orig - fd_step);
        let down = frag.loss();
        frag.set(name, idx, orig);
        let fd = (up - down) / (2.0 * fd_step);
        let analytic = grads.get(name).map_or(0.0, |g| g[idx]);
        let err = rel_err(analytic, fd);
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst = Some((name.to_string(), idx, analytic, fd));
        }
        report.probed += 1;
    }
    Ok(report)
}
