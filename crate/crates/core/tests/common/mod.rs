//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use toonwarp_core::{DenseField, ImageBuffer};

/// Straight-from-the-definition bilinear sample with edge clamping.
pub fn naive_sample(image: &ImageBuffer, x: f64, y: f64) -> [f64; 3] {
    let (h, w) = image.dims();
    let x = x.max(0.0).min((w - 1) as f64);
    let y = y.max(0.0).min((h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let p = |r: usize, q: usize| image.pixel(r, q)[c];
        *o = p(y0, x0) * (1.0 - fx) * (1.0 - fy)
            + p(y0, x1) * fx * (1.0 - fy)
            + p(y1, x0) * (1.0 - fx) * fy
            + p(y1, x1) * fx * fy;
    }
    out
}

pub fn naive_warp(image: &ImageBuffer, field: &DenseField) -> ImageBuffer {
    let (h, w) = image.dims();
    ImageBuffer::from_fn(h, w, |i, j| {
        let (dx, dy) = field.get(i, j);
        naive_sample(image, j as f64 + dx, i as f64 + dy)
    })
    .unwrap()
}

pub fn random_image(rng: &mut impl Rng, h: usize, w: usize) -> ImageBuffer {
    ImageBuffer::from_fn(h, w, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap()
}

/// Dense field whose sample points stay inside the image and at least
/// `margin` away from every lattice line, where the warp is smooth.
pub fn kink_free_field(rng: &mut impl Rng, h: usize, w: usize, margin: f64) -> DenseField {
    let pick = |rng: &mut dyn rand::RngCore, pos: usize, n: usize| -> f64 {
        loop {
            let target = rng.gen_range(0.0..(n - 1) as f64);
            let frac = target - target.floor();
            if frac > margin && frac < 1.0 - margin {
                return target - pos as f64;
            }
        }
    };
    let mut data = Vec::with_capacity(h * w * 2);
    for i in 0..h {
        for j in 0..w {
            let dx = pick(rng, j, w);
            let dy = pick(rng, i, h);
            data.push(dx);
            data.push(dy);
        }
    }
    DenseField::from_vec(h, w, data).unwrap()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Relative error between an analytic and a numeric derivative.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Central difference of `f` along coordinate `k` of `x`.
pub fn central_diff(x: &[f64], k: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut p = x.to_vec();
    p[k] = x[k] + h;
    let fp = f(&p);
    p[k] = x[k] - h;
    let fm = f(&p);
    (fp - fm) / (2.0 * h)
}
