use std::path::Path;

use crate::raster::{Raster, RgbImage};

use super::FormatError;

/// 8-bit RGB PNG → channels in `[0, 1]`.
pub fn read_rgb_png(path: impl AsRef<Path>) -> Result<RgbImage, FormatError> {
    let img = image::open(path.as_ref())?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img
        .pixels()
        .map(|p| [p[0] as f32 / 255.0, p[1] as f32 / 255.0, p[2] as f32 / 255.0])
        .collect();
    Ok(Raster {
        width: w as usize,
        height: h as usize,
        data,
    })
}

/// Quantizes to 8 bits per channel and writes a PNG.
pub fn write_rgb_png(path: impl AsRef<Path>, img: &RgbImage) -> Result<(), FormatError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| FormatError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    let bytes: Vec<u8> = img
        .data
        .iter()
        .flat_map(|c| c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
        .collect();
    image::save_buffer(
        path,
        &bytes,
        img.width as u32,
        img.height as u32,
        image::ColorType::Rgb8,
    )?;
    Ok(())
}
