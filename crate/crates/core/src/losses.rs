//! Training losses: L1 reconstruction, L1 field supervision, cosine
//! smoothness, and their weighted sum.
//!
//! Both L1 terms are means over elements. The smoothness term is a sum over
//! neighbouring pixel pairs of the dense field.

use crate::error::{ensure_same_dims, Error, Result};
use crate::field::{CoarseField, DenseField, WarpField};
use crate::image::ImageBuffer;

/// Stabilizer added to cosine denominators.
pub const COSINE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.7,
            lambda3: 1e-6,
        }
    }
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        let w = Self {
            lambda1,
            lambda2,
            lambda3,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossReport {
    pub recon: f64,
    pub warp: f64,
    pub reg: f64,
    pub total: f64,
}

impl LossReport {
    pub fn weighted(recon: f64, warp: f64, reg: f64, w: &LossWeights) -> Self {
        Self {
            recon,
            warp,
            reg,
            total: w.lambda1 * recon + w.lambda2 * warp + w.lambda3 * reg,
        }
    }

    /// Element-wise mean of several reports.
    pub fn mean(reports: &[LossReport]) -> LossReport {
        let n = reports.len().max(1) as f64;
        let mut acc = LossReport::default();
        for r in reports {
            acc.recon += r.recon;
            acc.warp += r.warp;
            acc.reg += r.reg;
            acc.total += r.total;
        }
        LossReport {
            recon: acc.recon / n,
            warp: acc.warp / n,
            reg: acc.reg / n,
            total: acc.total / n,
        }
    }
}

/// Gradients of the weighted total, already multiplied by the weights.
#[derive(Debug, Clone)]
pub struct LossGradients {
    pub d_image: ImageBuffer,
    /// Direct gradient on the coarse field from the supervision term.
    pub d_coarse: Vec<f64>,
    /// Gradient on the dense field from the smoothness term.
    pub d_dense: DenseField,
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn mean_l1(
    a: impl Iterator<Item = f64>,
    b: impl Iterator<Item = f64>,
    n: usize,
) -> (f64, Vec<f64>) {
    let inv = 1.0 / n as f64;
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (x, y) in a.zip(b) {
        let d = x - y;
        sum += d.abs();
        grad.push(sign(d) * inv);
    }
    (sum * inv, grad)
}

/// Mean absolute difference and its subgradient with respect to `predicted`.
pub fn recon_loss(predicted: &ImageBuffer, target: &ImageBuffer) -> Result<(f64, ImageBuffer)> {
    ensure_same_dims("recon_loss", predicted.dims(), target.dims())?;
    let n = predicted.data().len();
    let (loss, grad) = mean_l1(
        predicted.data().iter().copied(),
        target.data().iter().copied(),
        n,
    );
    let (h, w) = predicted.dims();
    Ok((loss, ImageBuffer::from_vec(h, w, grad)?))
}

/// Mean absolute difference between coarse fields; gradient is with respect
/// to `predicted`, laid out like its data.
pub fn warp_field_loss(predicted: &CoarseField, target: &CoarseField) -> Result<(f64, Vec<f64>)> {
    ensure_same_dims("warp_field_loss", predicted.dims(), target.dims())?;
    let n = predicted.data().len();
    Ok(mean_l1(
        predicted.data().iter().map(|&v| v as f64),
        target.data().iter().map(|&v| v as f64),
        n,
    ))
}

/// One `1 - cos` term and its gradients with respect to both vectors.
#[inline]
fn cosine_term(u: (f64, f64), v: (f64, f64)) -> (f64, (f64, f64), (f64, f64)) {
    let nu = u.0.hypot(u.1);
    let nv = v.0.hypot(v.1);
    let dot = u.0 * v.0 + u.1 * v.1;
    let den = nu * nv + COSINE_EPS;
    let cos = dot / den;
    // d(cos)/du = v/den - dot * nv * (u/|u|) / den^2, with u/|u| := 0 at u = 0
    let k = dot / (den * den);
    let du = if nu > 0.0 {
        let s = k * nv / nu;
        (v.0 / den - s * u.0, v.1 / den - s * u.1)
    } else {
        (v.0 / den, v.1 / den)
    };
    let dv = if nv > 0.0 {
        let s = k * nu / nv;
        (u.0 / den - s * v.0, u.1 / den - s * v.1)
    } else {
        (u.0 / den, u.1 / den)
    };
    (1.0 - cos, (-du.0, -du.1), (-dv.0, -dv.1))
}

/// Cosine smoothness over horizontal and vertical neighbour pairs.
///
/// Works on any grid of at least one pair; cells without a left or upper
/// neighbour contribute no term in that direction.
pub fn smooth_loss(field: &DenseField) -> (f64, DenseField) {
    let (h, w) = field.dims();
    let mut grad = vec![0.0; h * w * 2];
    let mut loss = 0.0;
    let add_pair = |grad: &mut [f64], a: (usize, usize), b: (usize, usize)| {
        let (t, ga, gb) = cosine_term(field.get(a.0, a.1), field.get(b.0, b.1));
        let ka = (a.0 * w + a.1) * 2;
        let kb = (b.0 * w + b.1) * 2;
        grad[ka] += ga.0;
        grad[ka + 1] += ga.1;
        grad[kb] += gb.0;
        grad[kb + 1] += gb.1;
        t
    };
    for i in 0..h {
        for j in 0..w {
            if j > 0 {
                loss += add_pair(&mut grad, (i, j - 1), (i, j));
            }
            if i > 0 {
                loss += add_pair(&mut grad, (i - 1, j), (i, j));
            }
        }
    }
    let grad = DenseField::from_vec(h, w, grad).expect("dims already validated");
    (loss, grad)
}

/// Number of neighbour pairs [`smooth_loss`] sums over.
pub fn smooth_pair_count(height: usize, width: usize) -> usize {
    height * width.saturating_sub(1) + height.saturating_sub(1) * width
}

fn check_total_shapes(
    predicted_image: &ImageBuffer,
    target_image: &ImageBuffer,
    predicted_field: &CoarseField,
    target_field: &CoarseField,
    dense_predicted: &DenseField,
) -> Result<()> {
    ensure_same_dims(
        "total_loss images",
        predicted_image.dims(),
        target_image.dims(),
    )?;
    ensure_same_dims(
        "total_loss fields",
        predicted_field.dims(),
        target_field.dims(),
    )?;
    ensure_same_dims(
        "total_loss dense field",
        predicted_image.dims(),
        dense_predicted.dims(),
    )
}

/// Weighted total `lambda1 * recon + lambda2 * warp + lambda3 * reg`.
pub fn total_loss(
    predicted_image: &ImageBuffer,
    target_image: &ImageBuffer,
    predicted_field: &CoarseField,
    target_field: &CoarseField,
    dense_predicted: &DenseField,
    weights: &LossWeights,
) -> Result<LossReport> {
    Ok(total_loss_with_grads(
        predicted_image,
        target_image,
        predicted_field,
        target_field,
        dense_predicted,
        weights,
    )?
    .0)
}

pub fn total_loss_with_grads(
    predicted_image: &ImageBuffer,
    target_image: &ImageBuffer,
    predicted_field: &CoarseField,
    target_field: &CoarseField,
    dense_predicted: &DenseField,
    weights: &LossWeights,
) -> Result<(LossReport, LossGradients)> {
    weights.validate()?;
    check_total_shapes(
        predicted_image,
        target_image,
        predicted_field,
        target_field,
        dense_predicted,
    )?;
    let (recon, d_image) = recon_loss(predicted_image, target_image)?;
    let (warp, d_coarse) = warp_field_loss(predicted_field, target_field)?;
    let (reg, d_dense) = smooth_loss(dense_predicted);
    let report = LossReport::weighted(recon, warp, reg, weights);
    let grads = LossGradients {
        d_image: scale_image(d_image, weights.lambda1)?,
        d_coarse: d_coarse.into_iter().map(|g| g * weights.lambda2).collect(),
        d_dense: d_dense.scaled(weights.lambda3)?,
    };
    Ok((report, grads))
}

fn scale_image(img: ImageBuffer, s: f64) -> Result<ImageBuffer> {
    let (h, w) = img.dims();
    ImageBuffer::from_vec(h, w, img.into_vec().into_iter().map(|v| v * s).collect())
}
