//! Warp fields: coarse learnable grids and their dense per-pixel upsampling.
//!
//! Displacements are in pixels of the full-resolution image. `dx` follows
//! columns (rightward), `dy` follows rows (downward).

mod atf;
pub(crate) mod viz;

pub use atf::{decode_field, encode_field, load_field, save_field, ATF_MAGIC};
pub use viz::visualize_field;

use crate::error::{Error, Result};

pub const DEFAULT_GRID: usize = 32;
pub const DEFAULT_RESOLUTION: usize = 256;

/// Coarse grid of `(dx, dy)` displacements. Stored as `f32` so that the
/// on-disk form is lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseField {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

/// Per-pixel `(dx, dy)` displacements matching an image's dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// Operations shared by both field resolutions.
pub trait WarpField: Sized {
    fn dims(&self) -> (usize, usize);
    fn scaled(&self, alpha: f64) -> Result<Self>;
    fn hflipped(&self) -> Self;
    /// Sum of absolute values of all components.
    fn l1_norm(&self) -> f64;
}

impl CoarseField {
    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        check_coarse_dims(height, width)?;
        Ok(Self {
            height,
            width,
            data: vec![0.0; height * width * 2],
        })
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_coarse_dims(height, width)?;
        check_len(data.len(), height, width)?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "coarse field contains non-finite values".into(),
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> (f32, f32),
    ) -> Result<Self> {
        check_coarse_dims(height, width)?;
        let mut data = Vec::with_capacity(height * width * 2);
        for i in 0..height {
            for j in 0..width {
                let (dx, dy) = f(i, j);
                data.push(dx);
                data.push(dy);
            }
        }
        Self::from_vec(height, width, data)
    }

    pub fn constant(height: usize, width: usize, dx: f32, dy: f32) -> Result<Self> {
        Self::from_fn(height, width, |_, _| (dx, dy))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable access for optimizers. Callers must keep values finite.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> (f32, f32) {
        let k = (row * self.width + col) * 2;
        (self.data[k], self.data[k + 1])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    /// Mean Euclidean length of the displacement vectors.
    pub fn mean_magnitude(&self) -> f64 {
        let sum: f64 = self
            .data
            .chunks_exact(2)
            .map(|c| (c[0] as f64).hypot(c[1] as f64))
            .sum();
        sum / (self.height * self.width) as f64
    }

    /// Linear combination `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &CoarseField, b: f64) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(Error::InvalidArgument("field shape mismatch".into()));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&x, &y)| (a * x as f64 + b * y as f64) as f32)
            .collect();
        Self::from_vec(self.height, self.width, data)
    }
}

impl WarpField for CoarseField {
    fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn scaled(&self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let data = self
            .data
            .iter()
            .map(|&v| (v as f64 * alpha) as f32)
            .collect();
        Self::from_vec(self.height, self.width, data)
    }

    fn hflipped(&self) -> Self {
        let w = self.width;
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.height {
            for j in 0..w {
                let src = (i * w + (w - 1 - j)) * 2;
                let dst = (i * w + j) * 2;
                data[dst] = -self.data[src];
                data[dst + 1] = self.data[src + 1];
            }
        }
        Self { data, ..*self }
    }

    fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs() as f64).sum()
    }
}

impl DenseField {
    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        check_dense_dims(height, width)?;
        Ok(Self {
            height,
            width,
            data: vec![0.0; height * width * 2],
        })
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dense_dims(height, width)?;
        check_len(data.len(), height, width)?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "dense field contains non-finite values".into(),
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> (f64, f64),
    ) -> Result<Self> {
        check_dense_dims(height, width)?;
        let mut data = Vec::with_capacity(height * width * 2);
        for i in 0..height {
            for j in 0..width {
                let (dx, dy) = f(i, j);
                data.push(dx);
                data.push(dy);
            }
        }
        Self::from_vec(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> (f64, f64) {
        let k = (row * self.width + col) * 2;
        (self.data[k], self.data[k + 1])
    }

    pub fn max_magnitude(&self) -> f64 {
        self.data
            .chunks_exact(2)
            .map(|c| c[0].hypot(c[1]))
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &DenseField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl WarpField for DenseField {
    fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn scaled(&self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let data = self.data.iter().map(|v| v * alpha).collect();
        Self::from_vec(self.height, self.width, data)
    }

    fn hflipped(&self) -> Self {
        let w = self.width;
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.height {
            for j in 0..w {
                let src = (i * w + (w - 1 - j)) * 2;
                let dst = (i * w + j) * 2;
                data[dst] = -self.data[src];
                data[dst + 1] = self.data[src + 1];
            }
        }
        Self { data, ..*self }
    }

    fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }
}

pub fn zero_field(height: usize, width: usize) -> Result<CoarseField> {
    CoarseField::zeros(height, width)
}

pub fn scale_field<F: WarpField>(field: &F, alpha: f64) -> Result<F> {
    field.scaled(alpha)
}

/// Mirror left-right: columns reversed and `dx` negated.
pub fn hflip_field<F: WarpField>(field: &F) -> F {
    field.hflipped()
}

/// Align-corners bilinear sampling positions along one axis.
#[derive(Debug, Clone)]
struct AxisTaps {
    lo: Vec<usize>,
    hi: Vec<usize>,
    frac: Vec<f64>,
}

impl AxisTaps {
    fn new(coarse: usize, dense: usize) -> Self {
        let mut taps = AxisTaps {
            lo: Vec::with_capacity(dense),
            hi: Vec::with_capacity(dense),
            frac: Vec::with_capacity(dense),
        };
        for o in 0..dense {
            let pos = if dense == 1 {
                0.0
            } else {
                (o * (coarse - 1)) as f64 / (dense - 1) as f64
            };
            let lo = (pos.floor() as usize).min(coarse - 2);
            taps.lo.push(lo);
            taps.hi.push(lo + 1);
            taps.frac.push(pos - lo as f64);
        }
        taps
    }
}

/// Precomputed bilinear weights for upsampling a coarse grid to a dense one.
///
/// Reusing a plan avoids recomputing the taps inside optimization loops.
#[derive(Debug, Clone)]
pub struct UpsamplePlan {
    coarse: (usize, usize),
    dense: (usize, usize),
    rows: AxisTaps,
    cols: AxisTaps,
}

impl UpsamplePlan {
    pub fn new(coarse: (usize, usize), dense: (usize, usize)) -> Result<Self> {
        check_coarse_dims(coarse.0, coarse.1)?;
        if dense.0 < coarse.0 || dense.1 < coarse.1 {
            return Err(Error::InvalidDimension(format!(
                "cannot upsample {}x{} to smaller {}x{}",
                coarse.0, coarse.1, dense.0, dense.1
            )));
        }
        Ok(Self {
            coarse,
            dense,
            rows: AxisTaps::new(coarse.0, dense.0),
            cols: AxisTaps::new(coarse.1, dense.1),
        })
    }

    pub fn dense_dims(&self) -> (usize, usize) {
        self.dense
    }

    pub fn coarse_dims(&self) -> (usize, usize) {
        self.coarse
    }

    pub fn apply(&self, field: &CoarseField) -> Result<DenseField> {
        if field.dims() != self.coarse {
            return Err(Error::InvalidArgument(format!(
                "plan expects a {}x{} field, got {}x{}",
                self.coarse.0, self.coarse.1, field.height, field.width
            )));
        }
        let values: Vec<f64> = field.data.iter().map(|&v| v as f64).collect();
        self.apply_values(&values)
    }

    /// [`UpsamplePlan::apply`] on raw coarse values laid out like
    /// [`CoarseField::data`], kept in double precision.
    pub(crate) fn apply_values(&self, src: &[f64]) -> Result<DenseField> {
        debug_assert_eq!(src.len(), self.coarse.0 * self.coarse.1 * 2);
        let (dh, dw) = self.dense;
        let cw = self.coarse.1;
        let at = |r: usize, c: usize, k: usize| src[(r * cw + c) * 2 + k];
        let mut data = Vec::with_capacity(dh * dw * 2);
        for i in 0..dh {
            let (r0, r1, fy) = (self.rows.lo[i], self.rows.hi[i], self.rows.frac[i]);
            for j in 0..dw {
                let (c0, c1, fx) = (self.cols.lo[j], self.cols.hi[j], self.cols.frac[j]);
                for k in 0..2 {
                    let top = (1.0 - fx) * at(r0, c0, k) + fx * at(r0, c1, k);
                    let bottom = (1.0 - fx) * at(r1, c0, k) + fx * at(r1, c1, k);
                    data.push((1.0 - fy) * top + fy * bottom);
                }
            }
        }
        DenseField::from_vec(dh, dw, data)
    }

    /// Adjoint of [`UpsamplePlan::apply`]: maps a gradient on the dense field
    /// to a gradient on the coarse cells (row-major, `dx` then `dy`).
    pub fn backward(&self, grad: &DenseField) -> Result<Vec<f64>> {
        if grad.dims() != self.dense {
            return Err(Error::InvalidArgument(
                "dense gradient does not match the upsample plan".into(),
            ));
        }
        let (dh, dw) = self.dense;
        let cw = self.coarse.1;
        let mut out = vec![0.0; self.coarse.0 * cw * 2];
        for i in 0..dh {
            let (r0, r1, fy) = (self.rows.lo[i], self.rows.hi[i], self.rows.frac[i]);
            for j in 0..dw {
                let (c0, c1, fx) = (self.cols.lo[j], self.cols.hi[j], self.cols.frac[j]);
                for k in 0..2 {
                    let g = grad.data[(i * dw + j) * 2 + k];
                    out[(r0 * cw + c0) * 2 + k] += (1.0 - fy) * (1.0 - fx) * g;
                    out[(r0 * cw + c1) * 2 + k] += (1.0 - fy) * fx * g;
                    out[(r1 * cw + c0) * 2 + k] += fy * (1.0 - fx) * g;
                    out[(r1 * cw + c1) * 2 + k] += fy * fx * g;
                }
            }
        }
        Ok(out)
    }
}

/// Bilinear (align-corners) upsampling to `out_h x out_w`. Displacement
/// magnitudes are left untouched.
pub fn upsample(field: &CoarseField, out_h: usize, out_w: usize) -> Result<DenseField> {
    UpsamplePlan::new(field.dims(), (out_h, out_w))?.apply(field)
}

fn check_coarse_dims(height: usize, width: usize) -> Result<()> {
    if height < 2 || width < 2 {
        return Err(Error::InvalidDimension(format!(
            "coarse field must be at least 2x2, got {height}x{width}"
        )));
    }
    Ok(())
}

fn check_dense_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidDimension(format!(
            "dense field must be at least 1x1, got {height}x{width}"
        )));
    }
    Ok(())
}

fn check_len(len: usize, height: usize, width: usize) -> Result<()> {
    if len != height * width * 2 {
        return Err(Error::InvalidArgument(format!(
            "field data has {len} values, expected {}",
            height * width * 2
        )));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "scaling factor must be finite, got {alpha}"
        )));
    }
    Ok(())
}
