use std::path::Path;

use crate::raster::Raster;

use super::{expect_payload, header_lines, parse_dims, read_file, write_file, FormatError};

/// Per-frame depth raster in scene units; `0.0` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub frame_index: usize,
    pub depth: Raster<f32>,
}

impl DepthMap {
    pub fn new(frame_index: usize, depth: Raster<f32>) -> Result<Self, FormatError> {
        if let Some(v) = depth.data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(FormatError::InvalidValue(format!(
                "depth values must be finite and non-negative, found {v}"
            )));
        }
        Ok(Self { frame_index, depth })
    }

    pub fn width(&self) -> usize {
        self.depth.width
    }

    pub fn height(&self) -> usize {
        self.depth.height
    }

    /// Depth at the nearest pixel, `None` outside the image or on holes.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let (ix, iy) = self.depth.nearest_pixel(x, y)?;
        let d = *self.depth.get(ix, iy);
        (d > 0.0).then_some(d as f64)
    }
}

/// Grayscale PFM (`Pf`), little-endian, rows stored bottom to top.
pub fn encode_pfm(depth: &Raster<f32>) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", depth.width, depth.height).into_bytes();
    out.reserve(depth.len() * 4);
    for row in (0..depth.height).rev() {
        for v in &depth.data[row * depth.width..(row + 1) * depth.width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn parse_scale(s: &str) -> Option<f32> {
    // Plain decimal only: optional '-', digits without a leading zero,
    // optional '.digits'.
    let body = s.strip_prefix('-').unwrap_or(s);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) || !frac.is_none_or(digits) || (int.len() > 1 && int.starts_with('0')) {
        return None;
    }
    s.parse().ok()
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Raster<f32>, FormatError> {
    let (lines, offset) = header_lines(bytes, 3)?;
    if lines[0] != "Pf" {
        return Err(FormatError::MalformedHeader(format!(
            "expected grayscale PFM magic \"Pf\", found {:?}",
            lines[0]
        )));
    }
    let (width, height) = parse_dims(lines[1])?;
    let scale = parse_scale(lines[2])
        .filter(|s| s.abs() == 1.0)
        .ok_or_else(|| FormatError::MalformedHeader(format!("bad scale {:?}", lines[2])))?;
    let little_endian = scale < 0.0;
    let payload = &bytes[offset..];
    expect_payload(payload.len(), width * height * 4)?;
    let mut data = vec![0.0f32; width * height];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (row_from_bottom, col) = (i / width, i % width);
        data[(height - 1 - row_from_bottom) * width + col] = v;
    }
    Ok(Raster {
        width,
        height,
        data,
    })
}

pub fn write_pfm(path: impl AsRef<Path>, depth: &Raster<f32>) -> Result<(), FormatError> {
    write_file(path.as_ref(), &encode_pfm(depth))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Raster<f32>, FormatError> {
    decode_pfm(&read_file(path.as_ref())?)
}
