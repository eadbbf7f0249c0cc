//! Gamma-curve time-step parameterization and discretization.
//!
//! A schedule of `n` points over trained timesteps `0..=t_max` is generated
//! as `t_max * u^gamma` for uniform `u`. With `gamma > 1` the points crowd
//! toward timestep 0 (the late, detail-forming end of generation); with
//! `gamma < 1` they crowd toward `t_max` (the early, structure-forming end).
//! The scaled variant additionally slides the curve endpoints: for
//! `gamma > 1` the largest point drops below `t_max`, for `gamma < 1` the
//! smallest rises above 0, with strength `alpha`.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaSpec {
    pub gamma: f64,
    /// Number of schedule points, at least 2.
    pub n: usize,
    /// Largest usable timestep (total trained steps minus one).
    pub t_max: usize,
    /// Scale strength for the endpoint slide; 0 disables it.
    pub alpha: f64,
}

impl GammaSpec {
    pub fn new(gamma: f64, n: usize, t_max: usize, alpha: f64) -> Result<Self> {
        let spec = GammaSpec { gamma, n, t_max, alpha };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be a positive real, got {}", self.gamma)));
        }
        if self.n < 2 {
            return Err(Error::Config(format!("schedule needs at least 2 steps, got {}", self.n)));
        }
        if self.alpha < 0.0 {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.gamma < 1.0 {
            let lift = self.alpha * (1.0 / self.gamma - 1.0);
            if lift >= self.t_max as f64 {
                return Err(Error::Config(format!(
                    "scaled curve lower bound {lift:.3} reaches t_max {}",
                    self.t_max
                )));
            }
        }
        Ok(())
    }
}

/// Where a schedule came from, for manifests.
#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    Uniform,
    Gamma(GammaSpec),
}

/// Strictly increasing integer timesteps in `[0, t_max]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimestepSchedule {
    steps: Vec<usize>,
    pub provenance: Provenance,
}

impl TimestepSchedule {
    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// One CSV line of integers, largest last.
    pub fn to_csv_line(&self) -> String {
        let mut s = String::new();
        for (i, t) in self.steps.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{t}");
        }
        s
    }
}

/// Uniform `n`-point schedule over `0..=t_max` (the gamma-1 curve).
pub fn uniform_schedule(n: usize, t_max: usize) -> Result<TimestepSchedule> {
    let spec = GammaSpec::new(1.0, n, t_max, 0.0)?;
    let mut s = discretize(&gamma_curve(&spec)?, t_max)?;
    s.provenance = Provenance::Uniform;
    Ok(s)
}

/// Plain gamma curve: `t_max * (i/(n-1))^gamma`, first point 0, last `t_max`.
pub fn gamma_curve(spec: &GammaSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let t = spec.t_max as f64;
    Ok((0..spec.n)
        .map(|i| {
            let u = i as f64 / (spec.n - 1) as f64;
            t * u.powf(spec.gamma)
        })
        .collect())
}

/// Gamma curve with the endpoint slide. Continuous in gamma at 1, where both
/// cases reduce to the plain curve.
pub fn scaled_gamma_curve(spec: &GammaSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let t = spec.t_max as f64;
    let (t_l, t_u) = if spec.gamma >= 1.0 {
        (0.0, t + spec.alpha * (spec.gamma - 1.0))
    } else {
        (spec.alpha * (1.0 - 1.0 / spec.gamma), t)
    };
    Ok((0..spec.n)
        .map(|i| {
            let u = i as f64 / (spec.n - 1) as f64;
            let u_scaled = (t * u - t_l) / (t_u - t_l);
            t * u_scaled.powf(spec.gamma)
        })
        .collect())
}

/// Round curve points to strictly increasing integers. Collisions are nudged
/// upward left to right; if the top saturates, earlier points are pushed
/// back down. Fails when `n` distinct values cannot fit in `0..=t_max`.
pub fn discretize(points: &[f64], t_max: usize) -> Result<TimestepSchedule> {
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidArg("cannot discretize an empty schedule".to_string()));
    }
    if n > t_max + 1 {
        return Err(Error::InvalidArg(format!(
            "{n} distinct timesteps cannot fit in 0..={t_max}"
        )));
    }
    for w in points.windows(2) {
        if w[1] < w[0] {
            return Err(Error::InvalidArg("curve points must be non-decreasing".to_string()));
        }
    }
    if points[0] < -0.5 || points[n - 1] > t_max as f64 + 0.5 {
        return Err(Error::InvalidArg(format!(
            "curve points must lie in [0, {t_max}], got [{}, {}]",
            points[0],
            points[n - 1]
        )));
    }
    let mut v: Vec<i64> = points.iter().map(|p| p.round() as i64).collect();
    for i in 1..n {
        if v[i] <= v[i - 1] {
            v[i] = v[i - 1] + 1;
        }
    }
    if v[n - 1] > t_max as i64 {
        v[n - 1] = t_max as i64;
        for i in (0..n - 1).rev() {
            if v[i] >= v[i + 1] {
                v[i] = v[i + 1] - 1;
            }
        }
    }
    debug_assert!(v[0] >= 0);
    Ok(TimestepSchedule {
        steps: v.into_iter().map(|x| x as usize).collect(),
        provenance: Provenance::Uniform,
    })
}

/// Discretized scaled gamma curve with provenance attached.
pub fn gamma_schedule(spec: &GammaSpec) -> Result<TimestepSchedule> {
    let mut s = discretize(&scaled_gamma_curve(spec)?, spec.t_max)?;
    s.provenance = if spec.gamma == 1.0 { Provenance::Uniform } else { Provenance::Gamma(*spec) };
    Ok(s)
}
