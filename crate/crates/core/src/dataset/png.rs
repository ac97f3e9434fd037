use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// 8-bit RGB to floats via `value / 255`.
pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<ImageBuffer> {
    ImageBuffer::from_vec(
        height,
        width,
        bytes.iter().map(|&b| b as f64 / 255.0).collect(),
    )
}

/// Floats to 8-bit RGB, clamping to `[0, 1]` and rounding to nearest.
pub fn to_rgb8(image: &ImageBuffer) -> Vec<u8> {
    image
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

pub fn load_png(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ));
    }
    let img = image::open(path)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    from_rgb8(h as usize, w as usize, img.as_raw())
}

pub fn save_png(image: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf =
        image::RgbImage::from_raw(image.width() as u32, image.height() as u32, to_rgb8(image))
            .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
}
