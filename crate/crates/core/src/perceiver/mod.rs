//! A small convolutional network mapping an RGB image to a coarse warp field.
//!
//! The layer list always ends in 2 output channels followed by adaptive
//! average pooling onto the coarse grid, so the output shape does not depend
//! on the input resolution.

mod augment;
mod checkpoint;
mod train;

pub use augment::{augment_pair, color_jitter, AugmentConfig, JitterParams};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use train::{
    chain_loss, chain_loss_and_grad, infer, train, write_history_csv, EpochRecord, Inference,
    TrainConfig, TrainOutcome,
};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{CoarseField, DEFAULT_GRID};
use crate::image::{ImageBuffer, CHANNELS};

/// Smallest accepted input side, before resizing to the model's input size.
pub const MIN_INPUT: usize = 64;
pub const LEAKY_SLOPE: f32 = 0.1;
pub const REFERENCE_INPUT: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    /// Square kernel with `kernel / 2` zero padding.
    Conv {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
    },
    LeakyRelu {
        slope: f32,
    },
    /// Non-overlapping window.
    AvgPool {
        window: usize,
    },
    AdaptiveAvgPool {
        out: usize,
    },
}

impl LayerSpec {
    fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv {
                in_ch,
                out_ch,
                kernel,
                ..
            } => out_ch * in_ch * kernel * kernel + out_ch,
            _ => 0,
        }
    }

    /// Output shape `(channels, height, width)` for an input shape.
    fn output_shape(&self, (c, h, w): (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        match *self {
            LayerSpec::Conv {
                in_ch,
                out_ch,
                kernel,
                stride,
            } => {
                if c != in_ch {
                    return Err(Error::InvalidArgument(format!(
                        "convolution expects {in_ch} channels, got {c}"
                    )));
                }
                if kernel == 0 || stride == 0 || kernel % 2 == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "unsupported convolution kernel {kernel} stride {stride}"
                    )));
                }
                let pad = kernel / 2;
                if h + 2 * pad < kernel || w + 2 * pad < kernel {
                    return Err(Error::InvalidDimension(format!(
                        "{h}x{w} input too small for kernel {kernel}"
                    )));
                }
                Ok((
                    out_ch,
                    (h + 2 * pad - kernel) / stride + 1,
                    (w + 2 * pad - kernel) / stride + 1,
                ))
            }
            LayerSpec::LeakyRelu { .. } => Ok((c, h, w)),
            LayerSpec::AvgPool { window } => {
                if window == 0 || h < window || w < window {
                    return Err(Error::InvalidDimension(format!(
                        "cannot pool {h}x{w} with window {window}"
                    )));
                }
                Ok((c, h / window, w / window))
            }
            LayerSpec::AdaptiveAvgPool { out } => {
                if out == 0 {
                    return Err(Error::InvalidDimension("adaptive pool to zero".into()));
                }
                Ok((c, out, out))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    spec: LayerSpec,
    /// Start of this layer's parameters in the flat parameter vector.
    offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyPerceiver {
    input_size: usize,
    layers: Vec<Layer>,
    params: Vec<f32>,
}

/// Channel-major activation tensor.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Tensor {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Tensor {
    fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }
}

/// Activations saved by [`perceiver_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Tensor>,
    output_shape: (usize, usize, usize),
}

impl TinyPerceiver {
    /// Builds a model with fan-in uniform initialization. With `zero_last`
    /// the final convolution starts at zero, so the model predicts the
    /// identity warp.
    pub fn new(input_size: usize, specs: &[LayerSpec], seed: u64, zero_last: bool) -> Result<Self> {
        if input_size < 1 {
            return Err(Error::InvalidDimension(
                "input size must be positive".into(),
            ));
        }
        let mut shape = (CHANNELS, input_size, input_size);
        let mut layers = Vec::with_capacity(specs.len());
        let mut offset = 0;
        for spec in specs {
            shape = spec.output_shape(shape)?;
            layers.push(Layer {
                spec: *spec,
                offset,
            });
            offset += spec.param_count();
        }
        match specs.last() {
            Some(LayerSpec::AdaptiveAvgPool { .. }) if shape.0 == 2 => {}
            _ => {
                return Err(Error::InvalidArgument(
                    "layer list must end in a 2-channel adaptive average pool".into(),
                ))
            }
        }
        if shape.1 < 2 {
            return Err(Error::InvalidDimension(
                "output grid must be at least 2x2".into(),
            ));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0f32; offset];
        let last_conv = layers
            .iter()
            .rposition(|l| matches!(l.spec, LayerSpec::Conv { .. }));
        for (idx, layer) in layers.iter().enumerate() {
            if let LayerSpec::Conv {
                in_ch,
                out_ch,
                kernel,
                ..
            } = layer.spec
            {
                if zero_last && Some(idx) == last_conv {
                    continue;
                }
                let fan_in = (in_ch * kernel * kernel) as f32;
                let bound = (6.0 / fan_in).sqrt();
                let n_weights = out_ch * in_ch * kernel * kernel;
                for p in &mut params[layer.offset..layer.offset + n_weights] {
                    *p = rng.gen_range(-bound..bound);
                }
            }
        }
        Ok(Self {
            input_size,
            layers,
            params,
        })
    }

    /// Reference architecture: input resized to 128x128, four 3x3
    /// convolutions (strides 2, 2, 1, 1; widths 16, 32, 32, 2) with leaky
    /// activations between them, then adaptive pooling to 32x32.
    pub fn reference(seed: u64) -> Self {
        let act = LayerSpec::LeakyRelu { slope: LEAKY_SLOPE };
        let conv = |in_ch, out_ch, stride| LayerSpec::Conv {
            in_ch,
            out_ch,
            kernel: 3,
            stride,
        };
        let specs = [
            conv(3, 16, 2),
            act,
            conv(16, 32, 2),
            act,
            conv(32, 32, 1),
            act,
            conv(32, 2, 1),
            LayerSpec::AdaptiveAvgPool { out: DEFAULT_GRID },
        ];
        Self::new(REFERENCE_INPUT, &specs, seed, true).expect("reference architecture is valid")
    }

    pub(crate) fn from_parts(
        input_size: usize,
        specs: &[LayerSpec],
        params: Vec<f32>,
    ) -> Result<Self> {
        let mut model = Self::new(input_size, specs, 0, true)?;
        if params.len() != model.params.len() {
            return Err(Error::InvalidArgument(format!(
                "layer list needs {} parameters, got {}",
                model.params.len(),
                params.len()
            )));
        }
        model.params = params;
        Ok(model)
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn grid(&self) -> usize {
        match self.layers.last().map(|l| l.spec) {
            Some(LayerSpec::AdaptiveAvgPool { out }) => out,
            _ => unreachable!("validated on construction"),
        }
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn prepare_input(&self, image: &ImageBuffer) -> Result<Tensor> {
        let (h, w) = image.dims();
        if h < MIN_INPUT || w < MIN_INPUT {
            return Err(Error::InvalidArgument(format!(
                "image is {h}x{w}; the perceiver needs at least {MIN_INPUT}x{MIN_INPUT}"
            )));
        }
        let resized = image.resize(self.input_size, self.input_size)?;
        let n = self.input_size;
        let mut t = Tensor::zeros(CHANNELS, n, n);
        for i in 0..n {
            for j in 0..n {
                let px = resized.pixel(i, j);
                for (ch, v) in px.iter().enumerate() {
                    t.data[(ch * n + i) * n + j] = v - 0.5;
                }
            }
        }
        Ok(t)
    }
}

/// Predicts the coarse field for `image`.
pub fn perceiver_forward(
    model: &TinyPerceiver,
    image: &ImageBuffer,
) -> Result<(CoarseField, ForwardCache)> {
    let (values, cache) = forward_values(model, image)?;
    let g = model.grid();
    let data = values.iter().map(|&v| v as f32).collect();
    let field =
        CoarseField::from_vec(g, g, data).map_err(|_| Error::NumericFailure { iteration: 0 })?;
    Ok((field, cache))
}

/// Forward pass keeping the output in double precision, laid out like
/// [`CoarseField::data`].
pub(crate) fn forward_values(
    model: &TinyPerceiver,
    image: &ImageBuffer,
) -> Result<(Vec<f64>, ForwardCache)> {
    let mut x = model.prepare_input(image)?;
    let mut inputs = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        let y = layer_forward(layer, &model.params, &x);
        inputs.push(x);
        x = y;
    }
    let plane = x.h * x.w;
    let values = (0..plane)
        .flat_map(|k| [x.data[k], x.data[plane + k]])
        .collect();
    Ok((
        values,
        ForwardCache {
            inputs,
            output_shape: x.shape(),
        },
    ))
}

/// Raw forward pass with `f64` parameters, laid out like the field data.
#[cfg(test)]
pub(crate) fn forward_f64(
    model: &TinyPerceiver,
    params: &[f64],
    image: &ImageBuffer,
) -> Result<Vec<f64>> {
    let mut x = model.prepare_input(image)?;
    for layer in &model.layers {
        x = layer_forward(layer, params, &x);
    }
    let plane = x.h * x.w;
    Ok((0..plane)
        .flat_map(|k| [x.data[k], x.data[plane + k]])
        .collect())
}

/// Parameter gradients for an upstream gradient on the coarse field (laid
/// out like [`CoarseField::data`]).
pub fn perceiver_backward(
    model: &TinyPerceiver,
    cache: &ForwardCache,
    grad: &[f64],
) -> Result<Vec<f64>> {
    if cache.inputs.len() != model.layers.len() {
        return Err(Error::InvalidArgument(format!(
            "cache holds {} layers, model has {}",
            cache.inputs.len(),
            model.layers.len()
        )));
    }
    let mut shape = cache.inputs[0].shape();
    for (layer, input) in model.layers.iter().zip(&cache.inputs) {
        if input.shape() != shape {
            return Err(Error::InvalidArgument(
                "cache does not match the model".into(),
            ));
        }
        shape = layer.spec.output_shape(shape)?;
    }
    if shape != cache.output_shape {
        return Err(Error::InvalidArgument(
            "cache does not match the model".into(),
        ));
    }
    let (c, g, _) = shape;
    if grad.len() != c * g * g {
        return Err(Error::InvalidArgument(format!(
            "upstream gradient has {} values, expected {}",
            grad.len(),
            c * g * g
        )));
    }
    let plane = g * g;
    let mut d = Tensor::zeros(c, g, g);
    for k in 0..plane {
        d.data[k] = grad[2 * k];
        d.data[plane + k] = grad[2 * k + 1];
    }
    let mut d_params = vec![0.0; model.params.len()];
    for (layer, input) in model.layers.iter().zip(&cache.inputs).rev() {
        d = layer_backward(layer, &model.params, input, &d, &mut d_params);
    }
    Ok(d_params)
}

fn layer_forward<P: Copy + Into<f64>>(layer: &Layer, params: &[P], x: &Tensor) -> Tensor {
    let (c, h, w) = x.shape();
    let (oc, oh, ow) = layer
        .spec
        .output_shape(x.shape())
        .expect("validated shapes");
    match layer.spec {
        LayerSpec::Conv {
            in_ch,
            out_ch,
            kernel: k,
            stride: s,
        } => {
            let pad = k / 2;
            let wts = &params[layer.offset..layer.offset + out_ch * in_ch * k * k];
            let bias = &params
                [layer.offset + out_ch * in_ch * k * k..layer.offset + layer.spec.param_count()];
            let mut out = Tensor::zeros(oc, oh, ow);
            for o in 0..out_ch {
                let dst = &mut out.data[o * oh * ow..(o + 1) * oh * ow];
                dst.fill(bias[o].into());
                for ci in 0..in_ch {
                    let src = &x.data[ci * h * w..(ci + 1) * h * w];
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv: f64 = wts[((o * in_ch + ci) * k + ky) * k + kx].into();
                            let (ox0, ox1) = valid_range(kx, pad, s, w, ow);
                            for oy in 0..oh {
                                let iy = (oy * s + ky) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let row = &src[iy as usize * w..];
                                let out_row = &mut dst[oy * ow..(oy + 1) * ow];
                                for ox in ox0..ox1 {
                                    out_row[ox] += wv * row[ox * s + kx - pad];
                                }
                            }
                        }
                    }
                }
            }
            out
        }
        LayerSpec::LeakyRelu { slope } => {
            let slope = slope as f64;
            Tensor {
                data: x
                    .data
                    .iter()
                    .map(|&v| if v > 0.0 { v } else { slope * v })
                    .collect(),
                ..x.clone()
            }
        }
        LayerSpec::AvgPool { window } => {
            let mut out = Tensor::zeros(oc, oh, ow);
            let inv = 1.0 / (window * window) as f64;
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut sum = 0.0;
                        for dy in 0..window {
                            for dx in 0..window {
                                sum += x.data[(ch * h + oy * window + dy) * w + ox * window + dx];
                            }
                        }
                        out.data[(ch * oh + oy) * ow + ox] = sum * inv;
                    }
                }
            }
            out
        }
        LayerSpec::AdaptiveAvgPool { out: g } => {
            let mut out = Tensor::zeros(oc, oh, ow);
            for ch in 0..c {
                for oy in 0..g {
                    let (y0, y1) = adaptive_window(oy, h, g);
                    for ox in 0..g {
                        let (x0, x1) = adaptive_window(ox, w, g);
                        let mut sum = 0.0;
                        for iy in y0..y1 {
                            for ix in x0..x1 {
                                sum += x.data[(ch * h + iy) * w + ix];
                            }
                        }
                        out.data[(ch * g + oy) * g + ox] = sum / ((y1 - y0) * (x1 - x0)) as f64;
                    }
                }
            }
            out
        }
    }
}

/// Accumulates parameter gradients into `d_params` and returns the gradient
/// with respect to the layer input.
fn layer_backward<P: Copy + Into<f64>>(
    layer: &Layer,
    params: &[P],
    x: &Tensor,
    d_out: &Tensor,
    d_params: &mut [f64],
) -> Tensor {
    let (c, h, w) = x.shape();
    let (_, oh, ow) = d_out.shape();
    let mut d_in = Tensor::zeros(c, h, w);
    match layer.spec {
        LayerSpec::Conv {
            in_ch,
            out_ch,
            kernel: k,
            stride: s,
        } => {
            let pad = k / 2;
            let n_w = out_ch * in_ch * k * k;
            let wts = &params[layer.offset..layer.offset + n_w];
            let (d_w, d_b) = d_params[layer.offset..layer.offset + n_w + out_ch].split_at_mut(n_w);
            for (o, db) in d_b.iter_mut().enumerate() {
                let g_out = &d_out.data[o * oh * ow..(o + 1) * oh * ow];
                *db += g_out.iter().sum::<f64>();
                for ci in 0..in_ch {
                    let src = &x.data[ci * h * w..(ci + 1) * h * w];
                    let d_src = &mut d_in.data[ci * h * w..(ci + 1) * h * w];
                    for ky in 0..k {
                        for kx in 0..k {
                            let widx = ((o * in_ch + ci) * k + ky) * k + kx;
                            let wv: f64 = wts[widx].into();
                            let (ox0, ox1) = valid_range(kx, pad, s, w, ow);
                            let mut gw = 0.0;
                            for oy in 0..oh {
                                let iy = (oy * s + ky) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let base = iy as usize * w;
                                let g_row = &g_out[oy * ow..(oy + 1) * ow];
                                for (ox, &g) in g_row.iter().enumerate().take(ox1).skip(ox0) {
                                    let ix = base + ox * s + kx - pad;
                                    gw += g * src[ix];
                                    d_src[ix] += g * wv;
                                }
                            }
                            d_w[widx] += gw;
                        }
                    }
                }
            }
        }
        LayerSpec::LeakyRelu { slope } => {
            let slope = slope as f64;
            for ((d, &g), &v) in d_in.data.iter_mut().zip(&d_out.data).zip(&x.data) {
                *d = if v > 0.0 { g } else { slope * g };
            }
        }
        LayerSpec::AvgPool { window } => {
            let inv = 1.0 / (window * window) as f64;
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = d_out.data[(ch * oh + oy) * ow + ox] * inv;
                        for dy in 0..window {
                            for dx in 0..window {
                                d_in.data[(ch * h + oy * window + dy) * w + ox * window + dx] += g;
                            }
                        }
                    }
                }
            }
        }
        LayerSpec::AdaptiveAvgPool { out: g } => {
            for ch in 0..c {
                for oy in 0..g {
                    let (y0, y1) = adaptive_window(oy, h, g);
                    for ox in 0..g {
                        let (x0, x1) = adaptive_window(ox, w, g);
                        let share =
                            d_out.data[(ch * g + oy) * g + ox] / ((y1 - y0) * (x1 - x0)) as f64;
                        for iy in y0..y1 {
                            for ix in x0..x1 {
                                d_in.data[(ch * h + iy) * w + ix] += share;
                            }
                        }
                    }
                }
            }
        }
    }
    d_in
}

/// Output columns whose tap `kx` lands inside the input row.
#[inline]
fn valid_range(kx: usize, pad: usize, stride: usize, w: usize, ow: usize) -> (usize, usize) {
    // need 0 <= ox * stride + kx - pad < w
    let lo = if kx >= pad {
        0
    } else {
        (pad - kx).div_ceil(stride)
    };
    let hi = if w + pad > kx {
        ((w + pad - kx - 1) / stride + 1).min(ow)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// Pooling window `[start, end)` for output index `o` of `out` over `n` inputs.
#[inline]
fn adaptive_window(o: usize, n: usize, out: usize) -> (usize, usize) {
    let start = o * n / out;
    let end = ((o + 1) * n).div_ceil(out);
    (start, end.max(start + 1))
}
