//! Differentiable bilinear warping with backward (sampling) semantics.
//!
//! Output pixel `(i, j)` reads the source at column `j + dx(i, j)` and row
//! `i + dy(i, j)`. Coordinates outside the image are clamped to the border.

use rayon::prelude::*;

use crate::error::{ensure_same_dims, Result};
use crate::field::{DenseField, WarpField};
use crate::image::{ImageBuffer, CHANNELS};

#[derive(Debug, Clone, PartialEq)]
pub struct WarpGradients {
    pub d_image: ImageBuffer,
    pub d_field: DenseField,
}

#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
    /// Sample fell outside the valid range and was clamped.
    clamped: bool,
}

#[inline]
fn tap(coord: f64, n: usize) -> Tap {
    let max = (n - 1) as f64;
    let clamped = !(0.0..=max).contains(&coord);
    let c = coord.clamp(0.0, max);
    if n == 1 {
        return Tap {
            lo: 0,
            hi: 0,
            frac: 0.0,
            clamped,
        };
    }
    let lo = (c.floor() as usize).min(n - 2);
    Tap {
        lo,
        hi: lo + 1,
        frac: c - lo as f64,
        clamped,
    }
}

#[inline]
fn blend(image: &ImageBuffer, tx: Tap, ty: Tap) -> [f64; CHANNELS] {
    let (a, b, c, d) = (
        image.pixel(ty.lo, tx.lo),
        image.pixel(ty.lo, tx.hi),
        image.pixel(ty.hi, tx.lo),
        image.pixel(ty.hi, tx.hi),
    );
    let (fx, fy) = (tx.frac, ty.frac);
    let mut out = [0.0; CHANNELS];
    for ch in 0..CHANNELS {
        out[ch] =
            (1.0 - fy) * ((1.0 - fx) * a[ch] + fx * b[ch]) + fy * ((1.0 - fx) * c[ch] + fx * d[ch]);
    }
    out
}

/// Bilinear read at continuous column `x` and row `y`, clamped to the border.
pub fn sample_bilinear(image: &ImageBuffer, x: f64, y: f64) -> [f64; CHANNELS] {
    blend(image, tap(x, image.width()), tap(y, image.height()))
}

/// `Warp(X, F)`: resample `image` at identity plus displacement.
pub fn warp(image: &ImageBuffer, field: &DenseField) -> Result<ImageBuffer> {
    ensure_same_dims("warp", image.dims(), field.dims())?;
    let (h, w) = image.dims();
    let mut out = vec![0.0; h * w * CHANNELS];
    out.par_chunks_mut(w * CHANNELS)
        .enumerate()
        .for_each(|(i, row)| {
            for j in 0..w {
                let (dx, dy) = field.get(i, j);
                let px = sample_bilinear(image, j as f64 + dx, i as f64 + dy);
                row[j * CHANNELS..(j + 1) * CHANNELS].copy_from_slice(&px);
            }
        });
    ImageBuffer::from_vec(h, w, out)
}

/// Gradients of `sum(upstream * warp(image, field))` with respect to the
/// image and the dense field. The field gradient along an axis is zero where
/// that coordinate was clamped.
pub fn warp_backward(
    image: &ImageBuffer,
    field: &DenseField,
    upstream: &ImageBuffer,
) -> Result<WarpGradients> {
    let (d_image, d_field) = backward_kernel(image, field, upstream, true)?;
    let (h, w) = image.dims();
    Ok(WarpGradients {
        d_image: ImageBuffer::from_vec(h, w, d_image)?,
        d_field,
    })
}

/// Field half of [`warp_backward`], skipping the image gradient.
pub fn warp_field_backward(
    image: &ImageBuffer,
    field: &DenseField,
    upstream: &ImageBuffer,
) -> Result<DenseField> {
    Ok(backward_kernel(image, field, upstream, false)?.1)
}

fn backward_kernel(
    image: &ImageBuffer,
    field: &DenseField,
    upstream: &ImageBuffer,
    want_image: bool,
) -> Result<(Vec<f64>, DenseField)> {
    ensure_same_dims("warp_backward", image.dims(), field.dims())?;
    ensure_same_dims("warp_backward upstream", image.dims(), upstream.dims())?;
    let (h, w) = image.dims();
    let mut d_image = if want_image {
        vec![0.0; h * w * CHANNELS]
    } else {
        Vec::new()
    };
    let mut d_field = vec![0.0; h * w * 2];
    for i in 0..h {
        for j in 0..w {
            let (dx, dy) = field.get(i, j);
            let tx = tap(j as f64 + dx, w);
            let ty = tap(i as f64 + dy, h);
            let g = upstream.pixel(i, j);
            let (fx, fy) = (tx.frac, ty.frac);

            if want_image {
                let corners = [
                    (ty.lo, tx.lo, (1.0 - fy) * (1.0 - fx)),
                    (ty.lo, tx.hi, (1.0 - fy) * fx),
                    (ty.hi, tx.lo, fy * (1.0 - fx)),
                    (ty.hi, tx.hi, fy * fx),
                ];
                for (r, c, wgt) in corners {
                    let k = image.index(r, c);
                    for ch in 0..CHANNELS {
                        d_image[k + ch] += wgt * g[ch];
                    }
                }
            }

            let (a, b, c, d) = (
                image.pixel(ty.lo, tx.lo),
                image.pixel(ty.lo, tx.hi),
                image.pixel(ty.hi, tx.lo),
                image.pixel(ty.hi, tx.hi),
            );
            let (mut gx, mut gy) = (0.0, 0.0);
            for ch in 0..CHANNELS {
                gx += g[ch] * ((1.0 - fy) * (b[ch] - a[ch]) + fy * (d[ch] - c[ch]));
                gy += g[ch] * ((1.0 - fx) * (c[ch] - a[ch]) + fx * (d[ch] - b[ch]));
            }
            let k = (i * w + j) * 2;
            if !tx.clamped {
                d_field[k] = gx;
            }
            if !ty.clamped {
                d_field[k + 1] = gy;
            }
        }
    }
    Ok((d_image, DenseField::from_vec(h, w, d_field)?))
}
