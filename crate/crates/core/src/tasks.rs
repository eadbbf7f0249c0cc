//! Procedural paired datasets for the two toy image-to-image tasks, the
//! degradation operators that produce conditions, and quality metrics.
//!
//! Images are `[C, H, W]` in `[0, 1]` here; conversion to the model's
//! `[-1, 1]` range happens at the diffusion boundary.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::Real;
use crate::rng;

/// Fixed 8-color palette (RGB in [0,1]).
pub const PALETTE: [[f64; 3]; 8] = [
    [0.90, 0.10, 0.10],
    [0.10, 0.80, 0.20],
    [0.15, 0.30, 0.90],
    [0.95, 0.85, 0.10],
    [0.10, 0.85, 0.90],
    [0.90, 0.20, 0.85],
    [0.95, 0.95, 0.95],
    [0.08, 0.08, 0.08],
];

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    /// Recover a clean image from a downsampled, noisy copy.
    Restore,
    /// Generate appearance from a binary edge map.
    StructGen,
}

impl TaskKind {
    pub fn cond_channels(self, image_channels: usize) -> usize {
        match self {
            TaskKind::Restore => image_channels,
            TaskKind::StructGen => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Restore => "restore",
            TaskKind::StructGen => "structgen",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SceneSpec {
    pub seed: u64,
    pub image_size: usize,
    /// 1 (grayscale) or 3 (RGB).
    pub channels: usize,
    pub min_shapes: usize,
    pub max_shapes: usize,
}

impl SceneSpec {
    pub fn new(seed: u64, image_size: usize, channels: usize) -> Self {
        SceneSpec { seed, image_size, channels, min_shapes: 3, max_shapes: 6 }
    }
}

/// A conditioned sample: `cond` is the model input image, `target` the clean
/// image the sampler should reach.
#[derive(Clone, Debug)]
pub struct TaskPair<E> {
    pub kind: TaskKind,
    pub seed: u64,
    pub cond: Vec<E>,
    pub target: Vec<E>,
    pub image_size: usize,
    pub channels: usize,
}

/// Render axis-aligned rectangles and filled circles over one linear
/// gradient, no anti-aliasing. Identical spec gives bit-identical pixels.
pub fn gen_scene<E: Real>(spec: &SceneSpec) -> Vec<E> {
    let s = spec.image_size;
    let mut rng = rng::stream(spec.seed, "scene");
    // background gradient between two palette colors along a random direction
    let ca = PALETTE[rng.random_range(0..PALETTE.len())];
    let cb = PALETTE[rng.random_range(0..PALETTE.len())];
    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (theta.cos(), theta.sin());
    let mut rgb = vec![[0.0f64; 3]; s * s];
    let corners = [
        0.5 * dx + 0.5 * dy,
        (s as f64 - 0.5) * dx + 0.5 * dy,
        0.5 * dx + (s as f64 - 0.5) * dy,
        (s as f64 - 0.5) * dx + (s as f64 - 0.5) * dy,
    ];
    let umin = corners.iter().cloned().fold(f64::INFINITY, f64::min);
    let umax = corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (umax - umin).max(1e-12);
    for y in 0..s {
        for x in 0..s {
            let u = (((x as f64 + 0.5) * dx + (y as f64 + 0.5) * dy) - umin) / span;
            for ch in 0..3 {
                rgb[y * s + x][ch] = ca[ch] + (cb[ch] - ca[ch]) * u;
            }
        }
    }
    // opaque shapes, drawn in order
    let count = rng.random_range(spec.min_shapes..=spec.max_shapes);
    for _ in 0..count {
        let color = PALETTE[rng.random_range(0..PALETTE.len())];
        if rng.random_range(0..2) == 0 {
            let w = rng.random_range(2..=s / 2);
            let h = rng.random_range(2..=s / 2);
            let x0 = rng.random_range(0..s);
            let y0 = rng.random_range(0..s);
            for y in y0..(y0 + h).min(s) {
                for x in x0..(x0 + w).min(s) {
                    rgb[y * s + x] = color;
                }
            }
        } else {
            let r = rng.random_range(2..=(s / 4).max(2)) as f64;
            let cx = rng.random_range(0..s) as f64 + 0.5;
            let cy = rng.random_range(0..s) as f64 + 0.5;
            for y in 0..s {
                for x in 0..s {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    if (px - cx) * (px - cx) + (py - cy) * (py - cy) <= r * r {
                        rgb[y * s + x] = color;
                    }
                }
            }
        }
    }
    pack_channels(&rgb, s, spec.channels)
}

fn pack_channels<E: Real>(rgb: &[[f64; 3]], s: usize, channels: usize) -> Vec<E> {
    let mut out = vec![E::zero(); channels * s * s];
    for (i, px) in rgb.iter().enumerate() {
        match channels {
            1 => {
                let l = LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2];
                out[i] = E::of_f64(l);
            }
            3 => {
                for ch in 0..3 {
                    out[ch * s * s + i] = E::of_f64(px[ch]);
                }
            }
            _ => unreachable!("channels is validated to 1 or 3"),
        }
    }
    out
}

/// 4x box-downsample, nearest-neighbour upsample back, plus seeded Gaussian
/// noise, clamped to [0,1].
pub fn degrade_restore<E: Real>(
    x0: &[E],
    channels: usize,
    size: usize,
    seed: u64,
    noise_sigma: f64,
) -> Result<Vec<E>> {
    if size % 4 != 0 {
        return Err(Error::InvalidArg(format!("image side {size} must be divisible by 4")));
    }
    let mut out = vec![E::zero(); x0.len()];
    let small = size / 4;
    for c in 0..channels {
        let plane = &x0[c * size * size..(c + 1) * size * size];
        for by in 0..small {
            for bx in 0..small {
                let mut acc = 0.0;
                for dy in 0..4 {
                    for dx in 0..4 {
                        acc += plane[(by * 4 + dy) * size + bx * 4 + dx].as_f64();
                    }
                }
                let v = acc / 16.0;
                for dy in 0..4 {
                    for dx in 0..4 {
                        out[c * size * size + (by * 4 + dy) * size + bx * 4 + dx] = E::of_f64(v);
                    }
                }
            }
        }
    }
    if noise_sigma > 0.0 {
        let mut rng = rng::stream(seed, "degrade");
        for v in out.iter_mut() {
            let n: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal);
            *v = E::of_f64((v.as_f64() + noise_sigma * n).clamp(0.0, 1.0));
        }
    }
    Ok(out)
}

/// Sobel gradient magnitude on luminance, thresholded to a binary map.
pub fn edge_condition<E: Real>(x0: &[E], channels: usize, size: usize) -> Vec<E> {
    let mut luma = vec![0.0f64; size * size];
    for (i, l) in luma.iter_mut().enumerate() {
        *l = match channels {
            1 => x0[i].as_f64(),
            _ => (0..channels).map(|c| LUMA[c] * x0[c * size * size + i].as_f64()).sum(),
        };
    }
    let at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= size as isize || y >= size as isize {
            0.0
        } else {
            luma[y as usize * size + x as usize]
        }
    };
    let mut out = vec![E::zero(); size * size];
    for y in 0..size as isize {
        for x in 0..size as isize {
            let gx = -at(x - 1, y - 1) + at(x + 1, y - 1) - 2.0 * at(x - 1, y)
                + 2.0 * at(x + 1, y)
                - at(x - 1, y + 1)
                + at(x + 1, y + 1);
            let gy = -at(x - 1, y - 1) - 2.0 * at(x, y - 1) - at(x + 1, y - 1)
                + at(x - 1, y + 1)
                + 2.0 * at(x, y + 1)
                + at(x + 1, y + 1);
            let mag = (gx * gx + gy * gy).sqrt();
            out[y as usize * size + x as usize] =
                if mag > 0.25 { E::one() } else { E::zero() };
        }
    }
    out
}

/// Build the `(condition, target)` pair for a task from one scene seed.
pub fn make_pair<E: Real>(
    kind: TaskKind,
    scene_seed: u64,
    image_size: usize,
    channels: usize,
) -> Result<TaskPair<E>> {
    let spec = SceneSpec::new(scene_seed, image_size, channels);
    let target = gen_scene::<E>(&spec);
    let cond = match kind {
        TaskKind::Restore => degrade_restore(&target, channels, image_size, scene_seed, 0.05)?,
        TaskKind::StructGen => edge_condition(&target, channels, image_size),
    };
    Ok(TaskPair { kind, seed: scene_seed, cond, target, image_size, channels })
}

/// PSNR cap used when the MSE underflows to zero.
pub const PSNR_CAP_DB: f64 = 99.0;

pub fn mse<E: Real>(a: &[E], b: &[E]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("psnr", format!("{} vs {} elements", a.len(), b.len())));
    }
    let n = a.len() as f64;
    Ok(a.iter().zip(b).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum::<f64>() / n)
}

/// PSNR in dB for images in [0,1]: `10 log10(1 / mse)`, capped at 99.
pub fn psnr_db(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (-10.0 * mse.log10()).min(PSNR_CAP_DB)
    }
}

/// Per-image and batch-level quality numbers.
#[derive(Clone, Debug)]
pub struct QualityResult {
    pub per_image: Vec<(f64, f64)>,
    pub mean_mse: f64,
    pub mean_psnr: f64,
    pub std_psnr: f64,
}

pub fn psnr_batch<E: Real>(pairs: &[(&[E], &[E])]) -> Result<QualityResult> {
    let mut per_image = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let m = mse(a, b)?;
        per_image.push((m, psnr_db(m)));
    }
    let n = per_image.len().max(1) as f64;
    let mean_mse = per_image.iter().map(|(m, _)| m).sum::<f64>() / n;
    let mean_psnr = per_image.iter().map(|(_, p)| p).sum::<f64>() / n;
    let var =
        per_image.iter().map(|(_, p)| (p - mean_psnr) * (p - mean_psnr)).sum::<f64>() / n;
    Ok(QualityResult { per_image, mean_mse, mean_psnr, std_psnr: var.sqrt() })
}

/// Map `[0,1]` image data to the model's `[-1,1]` range.
pub fn to_model_range<E: Real>(img: &[E]) -> Vec<E> {
    let two = E::of_f64(2.0);
    img.iter().map(|&v| two * v - E::one()).collect()
}

/// Map model output back to `[0,1]`, clamping strays.
pub fn to_unit_range<E: Real>(img: &[E]) -> Vec<E> {
    let half = E::of_f64(0.5);
    img.iter().map(|&v| ((v + E::one()) * half).max(E::zero()).min(E::one())).collect()
}
