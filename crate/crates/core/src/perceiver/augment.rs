//! Online augmentation: coherent horizontal flips and color jitter.
//!
//! Jitter order is brightness, contrast, saturation, hue, each followed by
//! clamping to `[0, 1]`. Contrast blends toward the image's mean luminance,
//! saturation toward each pixel's luminance (Rec. 601 weights), and hue
//! rotates the HSV hue by `hue * 360` degrees.

use rand::Rng;

use crate::dataset::PairedSample;
use crate::field::hflip_field;
use crate::field::viz::{hsv_to_rgb, rgb_to_hsv};
use crate::image::ImageBuffer;

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub flip: bool,
    pub jitter: bool,
    /// Factor ranges `[1 - x, 1 + x]` for brightness, contrast and saturation.
    pub factor_jitter: f64,
    /// Hue shift range `[-x, x]`, in turns.
    pub hue_jitter: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip: true,
            jitter: true,
            factor_jitter: 0.1,
            hue_jitter: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterParams {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

impl JitterParams {
    pub const IDENTITY: JitterParams = JitterParams {
        brightness: 1.0,
        contrast: 1.0,
        saturation: 1.0,
        hue: 0.0,
    };

    pub fn sample(rng: &mut impl Rng, cfg: &AugmentConfig) -> Self {
        let f = cfg.factor_jitter;
        let mut factor = || {
            if f > 0.0 {
                rng.gen_range(1.0 - f..=1.0 + f)
            } else {
                1.0
            }
        };
        let (brightness, contrast, saturation) = (factor(), factor(), factor());
        let hue = if cfg.hue_jitter > 0.0 {
            rng.gen_range(-cfg.hue_jitter..=cfg.hue_jitter)
        } else {
            0.0
        };
        Self {
            brightness,
            contrast,
            saturation,
            hue,
        }
    }
}

fn luma(px: [f64; 3]) -> f64 {
    LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2]
}

/// Applies `params` to `image`. Identity factors leave values untouched.
pub fn color_jitter(image: &ImageBuffer, params: &JitterParams) -> ImageBuffer {
    let mut out = image.clone();
    let (h, w) = out.dims();
    if params.brightness != 1.0 {
        for v in out.data_mut() {
            *v = (*v * params.brightness).clamp(0.0, 1.0);
        }
    }
    if params.contrast != 1.0 {
        let mut mean = 0.0;
        for i in 0..h {
            for j in 0..w {
                mean += luma(out.pixel(i, j));
            }
        }
        mean /= (h * w) as f64;
        for v in out.data_mut() {
            *v = (mean + params.contrast * (*v - mean)).clamp(0.0, 1.0);
        }
    }
    if params.saturation != 1.0 {
        for i in 0..h {
            for j in 0..w {
                let px = out.pixel(i, j);
                let l = luma(px);
                out.set_pixel(
                    i,
                    j,
                    px.map(|v| (l + params.saturation * (v - l)).clamp(0.0, 1.0)),
                );
            }
        }
    }
    if params.hue != 0.0 {
        for i in 0..h {
            for j in 0..w {
                let (hue, s, v) = rgb_to_hsv(out.pixel(i, j));
                let rgb = hsv_to_rgb(hue + params.hue * 360.0, s, v);
                out.set_pixel(i, j, rgb.map(|c| c.clamp(0.0, 1.0)));
            }
        }
    }
    out
}

/// Randomly flips the whole sample (images and field together) with
/// probability one half, then jitters input and target with the same draw.
pub fn augment_pair(
    sample: &PairedSample,
    rng: &mut impl Rng,
    cfg: &AugmentConfig,
) -> PairedSample {
    let flip = cfg.flip && rng.gen_bool(0.5);
    let jitter = cfg.jitter.then(|| JitterParams::sample(rng, cfg));
    let mut out = sample.clone();
    if flip {
        out.x_in = out.x_in.hflip();
        out.x_toon = out.x_toon.hflip();
        out.field = out.field.as_ref().map(hflip_field);
    }
    if let Some(p) = jitter {
        out.x_in = color_jitter(&out.x_in, &p);
        out.x_toon = color_jitter(&out.x_toon, &p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_dataset, FieldStyle, SynthConfig};
    use crate::field::upsample;
    use crate::warp::warp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> PairedSample {
        let cfg = SynthConfig {
            resolution: 48,
            grid: 6,
            magnitude: 3.0,
        };
        synth_dataset(5, 1, FieldStyle::SmoothRandom, &cfg)
            .unwrap()
            .remove(0)
    }

    #[test]
    fn identity_jitter_is_a_no_op() {
        let s = sample();
        assert_eq!(color_jitter(&s.x_in, &JitterParams::IDENTITY), s.x_in);
        let cfg = AugmentConfig {
            flip: false,
            jitter: false,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment_pair(&s, &mut rng, &cfg), s);
    }

    #[test]
    fn brightness_multiplies_then_clamps() {
        let img = ImageBuffer::from_vec(1, 2, vec![0.2, 0.5, 0.95, 1.0, 0.0, 0.6]).unwrap();
        let p = JitterParams {
            brightness: 1.1,
            ..JitterParams::IDENTITY
        };
        let out = color_jitter(&img, &p);
        for (a, b) in out.data().iter().zip(img.data()) {
            assert_eq!(*a, (b * 1.1).clamp(0.0, 1.0));
        }
    }

    #[test]
    fn saturation_zero_is_grayscale() {
        let s = sample();
        let p = JitterParams {
            saturation: 0.0,
            ..JitterParams::IDENTITY
        };
        let g = color_jitter(&s.x_in, &p);
        let px = g.pixel(3, 4);
        assert!((px[0] - px[1]).abs() < 1e-12 && (px[1] - px[2]).abs() < 1e-12);
    }

    #[test]
    fn hue_full_turn_is_identity() {
        let s = sample();
        let p = JitterParams {
            hue: 1.0,
            ..JitterParams::IDENTITY
        };
        assert!(color_jitter(&s.x_in, &p).max_abs_diff(&s.x_in).unwrap() < 1e-9);
    }

    #[test]
    fn sampled_params_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = AugmentConfig::default();
        for _ in 0..200 {
            let p = JitterParams::sample(&mut rng, &cfg);
            for f in [p.brightness, p.contrast, p.saturation] {
                assert!((0.9..=1.1).contains(&f));
            }
            assert!((-0.05..=0.05).contains(&p.hue));
        }
    }

    #[test]
    fn jitter_commutes_with_flip() {
        let s = sample();
        let p = JitterParams {
            brightness: 1.07,
            contrast: 0.93,
            saturation: 1.05,
            hue: 0.03,
        };
        let a = color_jitter(&s.x_in.hflip(), &p);
        let b = color_jitter(&s.x_in, &p).hflip();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
    }

    #[test]
    fn flipped_samples_stay_consistent() {
        let s = sample();
        let cfg = AugmentConfig {
            jitter: false,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut flipped = 0;
        for _ in 0..8 {
            let a = augment_pair(&s, &mut rng, &cfg);
            if a.x_in != s.x_in {
                flipped += 1;
            }
            let f = upsample(a.field.as_ref().unwrap(), 48, 48).unwrap();
            let rebuilt = warp(&a.x_in, &f).unwrap();
            assert!(rebuilt.max_abs_diff(&a.x_toon).unwrap() < 1e-5);
        }
        assert!(flipped > 0 && flipped < 8);
    }
}
