use super::DenseField;
use crate::image::ImageBuffer;

/// Color-wheel rendering: hue is the displacement angle (0 deg pointing right,
/// 90 deg pointing down), saturation the magnitude relative to the field's
/// largest vector. Zero displacement renders white.
pub fn visualize_field(field: &DenseField) -> ImageBuffer {
    let max = field.max_magnitude();
    ImageBuffer::from_fn(field.height(), field.width(), |i, j| {
        let (dx, dy) = field.get(i, j);
        if max == 0.0 {
            return [1.0; 3];
        }
        let sat = (dx.hypot(dy) / max).min(1.0);
        let hue = dy.atan2(dx).to_degrees().rem_euclid(360.0);
        hsv_to_rgb(hue, sat, 1.0)
    })
    .expect("field dimensions are valid image dimensions")
}

pub(crate) fn hsv_to_rgb(hue: f64, sat: f64, val: f64) -> [f64; 3] {
    let c = val * sat;
    let h = hue.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = val - c;
    [r + m, g + m, b + m]
}

/// Returns `(hue in degrees, saturation, value)`.
pub(crate) fn rgb_to_hsv([r, g, b]: [f64; 3]) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let hue = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let sat = if max == 0.0 { 0.0 } else { delta / max };
    (hue, sat, max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_is_white() {
        let img = visualize_field(&DenseField::zeros(5, 7).unwrap());
        assert!(img.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn constant_field_is_one_hue() {
        let f = DenseField::from_fn(4, 4, |_, _| (1.0, 0.0)).unwrap();
        let img = visualize_field(&f);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(img.pixel(i, j), [1.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn radial_field_wraps_the_hue_wheel() {
        let n = 33;
        let c = 16.0;
        let f = DenseField::from_fn(n, n, |i, j| (j as f64 - c, i as f64 - c)).unwrap();
        let img = visualize_field(&f);
        let hue_at = |i: usize, j: usize| rgb_to_hsv(img.pixel(i, j)).0;
        // right, down, left, up
        assert!(hue_at(16, 30).abs() < 1e-9);
        assert!((hue_at(30, 16) - 90.0).abs() < 1e-9);
        assert!((hue_at(16, 2) - 180.0).abs() < 1e-9);
        assert!((hue_at(2, 16) - 270.0).abs() < 1e-9);
        // saturation tracks magnitude
        let (_, s_near, _) = rgb_to_hsv(img.pixel(16, 20));
        let (_, s_far, _) = rgb_to_hsv(img.pixel(16, 28));
        assert!(s_near < s_far);
    }

    #[test]
    fn hsv_roundtrip() {
        for hue in [0.0, 37.0, 90.0, 181.0, 299.0, 359.0] {
            let rgb = hsv_to_rgb(hue, 0.7, 0.9);
            let (h, s, v) = rgb_to_hsv(rgb);
            assert!((h - hue).abs() < 1e-9 && (s - 0.7).abs() < 1e-9 && (v - 0.9).abs() < 1e-9);
        }
    }
}
