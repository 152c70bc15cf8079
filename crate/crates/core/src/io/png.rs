//! 8-bit PNG export for inspection; values are clamped to [0, 1].

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::scalar::Real;

fn quantize<T: Real>(v: T) -> u8 {
    let v = v.to_f64_lossy();
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_png<T: Real>(image: &Image<T>, path: impl AsRef<Path>) -> Result<()> {
    let (w, h) = (image.width() as u32, image.height() as u32);
    let bytes: Vec<u8> = image.data().iter().map(|v| quantize(*v)).collect();
    let color = match image.channels() {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        c => {
            return Err(Error::Format(format!(
                "PNG export takes 1 or 3 channels, got {c}"
            )))
        }
    };
    image::save_buffer(path, &bytes, w, h, color).map_err(|e| Error::Image(e.to_string()))
}

/// Writes 255 where the mask is set and 0 elsewhere.
pub fn write_mask_png(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    write_png(&mask.to_image::<f64>(), path)
}

/// Reads an 8-bit PNG as RGB in [0, 1].
pub fn read_png_rgb(path: impl AsRef<Path>) -> Result<Image<f64>> {
    let img = image::open(path)
        .map_err(|e| Error::Image(e.to_string()))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img
        .into_raw()
        .into_iter()
        .map(|b| b as f64 / 255.0)
        .collect();
    Image::from_vec(w, h, 3, data)
}
