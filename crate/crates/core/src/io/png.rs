use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::scene::ImageBuffer;

/// `round(255·v)` after clamping to `[0, 1]`.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Rounds every value to the nearest 8-bit level, as a PNG round trip would.
pub fn quantized(image: &ImageBuffer) -> ImageBuffer {
    ImageBuffer {
        data: image.data.iter().map(|&v| f64::from(quantize(v)) / 255.0).collect(),
        ..image.clone()
    }
}

pub fn write_png(path: &Path, image: &ImageBuffer) -> Result<()> {
    let mut out = RgbImage::new(image.width as u32, image.height as u32);
    for (x, y, px) in out.enumerate_pixels_mut() {
        let c = image.pixel(x as usize, y as usize);
        *px = Rgb([quantize(c.x), quantize(c.y), quantize(c.z)]);
    }
    out.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format("PNG", path, other.to_string()),
    })
}

pub fn read_png(path: &Path) -> Result<ImageBuffer> {
    let img = image::open(path)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::format("PNG", path, other.to_string()),
        })?
        .to_rgb8();
    let data = img.pixels().flat_map(|p| p.0.map(|v| f64::from(v) / 255.0)).collect();
    ImageBuffer::from_data(img.width() as usize, img.height() as usize, data)
}
