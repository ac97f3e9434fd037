//! Procedural paired data with known warp fields.
//!
//! Inputs are band-limited value noise over a base skin tone plus a round,
//! face-like highlight. Cartoons are produced by warping the input with the
//! upsampled ground-truth field, so every sample reconstructs exactly.

use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PairedSample;
use crate::error::{Error, Result};
use crate::field::{upsample, CoarseField, DEFAULT_GRID, DEFAULT_RESOLUTION};
use crate::image::ImageBuffer;
use crate::warp::warp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldStyle {
    /// A few random Gaussian displacement bumps.
    SmoothRandom,
    /// Magnification about the image center, tied to the highlight shading.
    Bulge,
    /// Constant `(magnitude, 0)` shift.
    Translation,
}

impl FromStr for FieldStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth-random" => Ok(FieldStyle::SmoothRandom),
            "bulge" => Ok(FieldStyle::Bulge),
            "translation" => Ok(FieldStyle::Translation),
            other => Err(Error::InvalidArgument(format!(
                "unknown field style `{other}` (expected smooth-random, bulge or translation)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub resolution: usize,
    pub grid: usize,
    /// Upper bound on any displacement component, in pixels.
    pub magnitude: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            grid: DEFAULT_GRID,
            magnitude: 4.0,
        }
    }
}

/// Ratio between the bulge field and the highlight's intensity gradient,
/// per pixel of resolution.
const BULGE_GAIN_PER_PX: f64 = 1.6;

pub fn synth_dataset(
    seed: u64,
    n: usize,
    style: FieldStyle,
    cfg: &SynthConfig,
) -> Result<Vec<PairedSample>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sample count must be at least 1".into(),
        ));
    }
    if !(cfg.magnitude.is_finite() && cfg.magnitude >= 0.0) {
        return Err(Error::InvalidArgument(
            "magnitude must be finite and non-negative".into(),
        ));
    }
    if cfg.resolution < cfg.grid {
        return Err(Error::InvalidDimension(format!(
            "resolution {} is smaller than grid {}",
            cfg.resolution, cfg.grid
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| synth_sample(&mut rng, format!("synth-{k:03}"), style, cfg))
        .collect()
}

fn synth_sample(
    rng: &mut ChaCha8Rng,
    id: String,
    style: FieldStyle,
    cfg: &SynthConfig,
) -> Result<PairedSample> {
    let res = cfg.resolution as f64;
    let sigma = res * rng.gen_range(0.10..0.15);
    let peak = cfg.magnitude * rng.gen_range(0.6..1.0);
    let gain = BULGE_GAIN_PER_PX * res;
    // Highlight amplitude chosen so that the bulge equals gain * grad(highlight).
    let highlight = peak * 0.5f64.exp() * sigma / gain;

    let octaves: &[(f64, f64)] = match style {
        // soft skin-like detail, so the highlight dominates the shading
        FieldStyle::Bulge => &[(1.0 / 32.0, 0.03), (1.0 / 64.0, 0.02)],
        _ => &[(1.0 / 8.0, 0.08), (1.0 / 16.0, 0.06), (1.0 / 32.0, 0.04)],
    };
    let x_in = texture(rng, cfg.resolution, octaves, sigma, highlight)?;
    let field = match style {
        FieldStyle::Translation => {
            CoarseField::constant(cfg.grid, cfg.grid, cfg.magnitude as f32, 0.0)?
        }
        FieldStyle::Bulge => bulge_field(cfg.grid, cfg.resolution, sigma, peak)?,
        FieldStyle::SmoothRandom => smooth_random_field(rng, cfg)?,
    };
    let dense = upsample(&field, cfg.resolution, cfg.resolution)?;
    let x_toon = warp(&x_in, &dense)?;
    PairedSample::new(id, x_in, x_toon, Some(field))
}

/// Coarse cell `(i, j)` sits at dense pixel `(i, j) * (res - 1) / (grid - 1)`.
fn cell_position(idx: usize, grid: usize, res: usize) -> f64 {
    (idx * (res - 1)) as f64 / (grid - 1) as f64
}

/// Radial magnification about the image center. Peak displacement `peak`
/// occurs at radius `sigma`; vectors point toward the center so the center
/// region is sampled more densely.
pub(crate) fn bulge_field(grid: usize, res: usize, sigma: f64, peak: f64) -> Result<CoarseField> {
    let c = (res - 1) as f64 / 2.0;
    let scale = peak * 0.5f64.exp() / sigma;
    CoarseField::from_fn(grid, grid, |i, j| {
        let ox = c - cell_position(j, grid, res);
        let oy = c - cell_position(i, grid, res);
        let fall = (-(ox * ox + oy * oy) / (2.0 * sigma * sigma)).exp();
        ((scale * ox * fall) as f32, (scale * oy * fall) as f32)
    })
}

fn smooth_random_field(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Result<CoarseField> {
    let res = cfg.resolution as f64;
    let bumps: Vec<[f64; 5]> = (0..4)
        .map(|_| {
            [
                rng.gen_range(0.0..res),
                rng.gen_range(0.0..res),
                res * rng.gen_range(0.15..0.35),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ]
        })
        .collect();
    let target = cfg.magnitude * rng.gen_range(0.5..1.0);
    let raw = CoarseField::from_fn(cfg.grid, cfg.grid, |i, j| {
        let (x, y) = (
            cell_position(j, cfg.grid, cfg.resolution),
            cell_position(i, cfg.grid, cfg.resolution),
        );
        let (mut dx, mut dy) = (0.0, 0.0);
        for b in &bumps {
            let r2 = (x - b[0]).powi(2) + (y - b[1]).powi(2);
            let g = (-r2 / (2.0 * b[2] * b[2])).exp();
            dx += b[3] * g;
            dy += b[4] * g;
        }
        (dx as f32, dy as f32)
    })?;
    let max = raw.max_abs() as f64;
    if max == 0.0 {
        return Ok(raw);
    }
    // scale so the largest component is `target`, never exceeding the bound
    let mut f = raw.combine(target / max, &raw, 0.0)?;
    let bound = cfg.magnitude as f32;
    for v in f.data_mut() {
        *v = v.clamp(-bound, bound);
    }
    Ok(f)
}

/// Smoothstep-interpolated random lattice at the given spacing.
fn value_noise(rng: &mut ChaCha8Rng, n: usize, spacing: f64) -> Vec<f64> {
    let cells = (n as f64 / spacing).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..cells * cells)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let gy = i as f64 / spacing;
        let (y0, ty) = (gy.floor() as usize, smooth(gy.fract()));
        for j in 0..n {
            let gx = j as f64 / spacing;
            let (x0, tx) = (gx.floor() as usize, smooth(gx.fract()));
            let at = |r: usize, c: usize| lattice[r * cells + c];
            let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
            let bottom = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// `octaves` lists (spacing as a fraction of resolution, amplitude).
fn texture(
    rng: &mut ChaCha8Rng,
    n: usize,
    octaves: &[(f64, f64)],
    sigma: f64,
    highlight: f64,
) -> Result<ImageBuffer> {
    // dark enough that the brightest highlight stays below 1
    let base = [0.32, 0.27, 0.24];
    let mut channels = vec![vec![0.0; n * n]; 3];
    for &(frac, amp) in octaves {
        let spacing = (n as f64 * frac).max(2.0);
        let shared = value_noise(rng, n, spacing);
        for ch in channels.iter_mut() {
            let own = value_noise(rng, n, spacing);
            for (k, v) in ch.iter_mut().enumerate() {
                *v += amp * (0.6 * shared[k] + 0.4 * own[k]);
            }
        }
    }
    let c = (n - 1) as f64 / 2.0;
    ImageBuffer::from_fn(n, n, |i, j| {
        let r2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
        let shade = highlight * (-r2 / (2.0 * sigma * sigma)).exp();
        let k = i * n + j;
        let mut px = [0.0; 3];
        for ch in 0..3 {
            let v = (base[ch] + channels[ch][k] + shade).clamp(0.0, 1.0);
            // keep inputs on the 8-bit lattice so PNG storage is lossless
            px[ch] = (v * 255.0).round() / 255.0;
        }
        px
    })
}
