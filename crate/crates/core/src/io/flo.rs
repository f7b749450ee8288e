use std::path::Path;

use crate::raster::Raster;

use super::{expect_payload, read_file, write_file, FormatError};

/// Middlebury `.flo` magic number (`"PIEH"` as a little-endian float).
pub const FLO_MAGIC: f32 = 202021.25;

/// Dense forward flow from frame `t` to `t + 1`, `(u, v)` in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub flow: Raster<[f32; 2]>,
}

impl FlowField {
    /// Validates finiteness and the sanity bound `|u|, |v| < max(width, height)`.
    pub fn new(flow: Raster<[f32; 2]>) -> Result<Self, FormatError> {
        let bound = flow.width.max(flow.height) as f32;
        for uv in &flow.data {
            if !uv[0].is_finite() || !uv[1].is_finite() {
                return Err(FormatError::InvalidValue("non-finite flow vector".into()));
            }
            if uv[0].abs() >= bound || uv[1].abs() >= bound {
                return Err(FormatError::InvalidValue(format!(
                    "flow vector ({}, {}) exceeds the image-size bound {bound}",
                    uv[0], uv[1]
                )));
            }
        }
        Ok(Self { flow })
    }

    pub fn width(&self) -> usize {
        self.flow.width
    }

    pub fn height(&self) -> usize {
        self.flow.height
    }
}

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let f = &flow.flow;
    let mut out = Vec::with_capacity(12 + f.len() * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(f.width as i32).to_le_bytes());
    out.extend_from_slice(&(f.height as i32).to_le_bytes());
    for uv in &f.data {
        out.extend_from_slice(&uv[0].to_le_bytes());
        out.extend_from_slice(&uv[1].to_le_bytes());
    }
    out
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField, FormatError> {
    if bytes.len() < 12 {
        return Err(FormatError::MalformedHeader(format!(
            ".flo header needs 12 bytes, found {}",
            bytes.len()
        )));
    }
    let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
    let magic = f32::from_le_bytes(word(0));
    if magic != FLO_MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let (w, h) = (i32::from_le_bytes(word(4)), i32::from_le_bytes(word(8)));
    if w < 0 || h < 0 {
        return Err(FormatError::MalformedHeader(format!(
            "negative .flo dimensions {w}×{h}"
        )));
    }
    let (width, height) = (w as usize, h as usize);
    let payload = &bytes[12..];
    expect_payload(payload.len(), width * height * 8)?;
    let data = payload
        .chunks_exact(8)
        .map(|c| {
            [
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            ]
        })
        .collect();
    FlowField::new(Raster {
        width,
        height,
        data,
    })
}

pub fn write_flo(path: impl AsRef<Path>, flow: &FlowField) -> Result<(), FormatError> {
    write_file(path.as_ref(), &encode_flo(flow))
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField, FormatError> {
    decode_flo(&read_file(path.as_ref())?)
}
