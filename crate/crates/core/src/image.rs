//! Floating-point RGB image storage.

use crate::error::{ensure_same_dims, Error, Result};

pub const CHANNELS: usize = 3;

/// Row-major, channel-interleaved RGB image with nominal range `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::filled(height, width, [0.0; CHANNELS])
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; CHANNELS]) -> Result<Self> {
        Self::from_fn(height, width, |_, _| rgb)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f64; CHANNELS],
    ) -> Result<Self> {
        check_dims(height, width)?;
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for i in 0..height {
            for j in 0..width {
                data.extend_from_slice(&f(i, j));
            }
        }
        Self::from_vec(height, width, data)
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width * CHANNELS {
            return Err(Error::InvalidArgument(format!(
                "image data has {} values, expected {}",
                data.len(),
                height * width * CHANNELS
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "image contains non-finite values".into(),
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        (row * self.width + col) * CHANNELS
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [f64; CHANNELS] {
        let k = self.index(row, col);
        [self.data[k], self.data[k + 1], self.data[k + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [f64; CHANNELS]) {
        let k = self.index(row, col);
        self.data[k..k + CHANNELS].copy_from_slice(&rgb);
    }

    /// Mirror columns left to right.
    pub fn hflip(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.height {
            for j in 0..self.width {
                out.set_pixel(i, j, self.pixel(i, self.width - 1 - j));
            }
        }
        out
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Mean absolute difference over all pixels and channels.
    pub fn mean_abs_diff(&self, other: &ImageBuffer) -> Result<f64> {
        ensure_same_dims("mean_abs_diff", self.dims(), other.dims())?;
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(sum / self.data.len() as f64)
    }

    pub fn max_abs_diff(&self, other: &ImageBuffer) -> Result<f64> {
        ensure_same_dims("max_abs_diff", self.dims(), other.dims())?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Bilinear resize with pixel-center alignment and edge clamping.
    ///
    /// An exact 2x reduction averages each 2x2 block.
    pub fn resize(&self, out_h: usize, out_w: usize) -> Result<Self> {
        check_dims(out_h, out_w)?;
        if (out_h, out_w) == self.dims() {
            return Ok(self.clone());
        }
        let sy = self.height as f64 / out_h as f64;
        let sx = self.width as f64 / out_w as f64;
        let src = |o: usize, s: f64, n: usize| -> (usize, usize, f64) {
            let p = ((o as f64 + 0.5) * s - 0.5).clamp(0.0, (n - 1) as f64);
            let p0 = (p.floor() as usize).min(n.saturating_sub(2));
            let p1 = (p0 + 1).min(n - 1);
            (p0, p1, p - p0 as f64)
        };
        Self::from_fn(out_h, out_w, |i, j| {
            let (y0, y1, fy) = src(i, sy, self.height);
            let (x0, x1, fx) = src(j, sx, self.width);
            let (a, b, c, d) = (
                self.pixel(y0, x0),
                self.pixel(y0, x1),
                self.pixel(y1, x0),
                self.pixel(y1, x1),
            );
            let mut out = [0.0; CHANNELS];
            for ch in 0..CHANNELS {
                out[ch] = (1.0 - fy) * ((1.0 - fx) * a[ch] + fx * b[ch])
                    + fy * ((1.0 - fx) * c[ch] + fx * d[ch]);
            }
            out
        })
    }
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidDimension(format!(
            "image dimensions must be at least 1x1, got {height}x{width}"
        )));
    }
    Ok(())
}
