//! Readers and writers for every file that crosses a stage boundary.
//!
//! Raster containers are the established ones (PFM depth, Middlebury `.flo`
//! flow, 16-bit binary PGM instance masks); tracks are CSV and Gaussians are
//! binary little-endian PLY. Headers are parsed strictly: the readers accept
//! exactly what the writers emit and reject anything else.

mod cameras;
mod flo;
mod images;
mod masks;
mod pfm;
mod ply;
mod tracks;

pub use cameras::{read_cameras, write_cameras, CameraRecord};
pub use flo::{decode_flo, encode_flo, read_flo, write_flo, FlowField, FLO_MAGIC};
pub use images::{read_rgb_png, write_rgb_png};
pub use masks::{
    decode_pgm16, encode_pgm16, read_masks, read_pgm16, write_masks, write_pgm16,
    InstanceMaskFrame,
};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm, DepthMap};
pub use ply::{
    decode_gaussians_ply, encode_gaussians_ply, read_gaussians_ply, write_gaussians_ply,
};
pub use tracks::{read_tracks, write_tracks, TrackObservation, TrackTable, TRACKS_HEADER};

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("bad .flo magic {0}")]
    BadMagic(f32),
    #[error("instance id {0} has no confidence entry")]
    ConfidenceMissingForId(u16),
    #[error("duplicate observation for track {track_id} at frame {frame}")]
    DuplicateObservation { track_id: u32, frame: usize },
    #[error("visible observation of track {track_id} at frame {frame} lies outside the image: ({x}, {y})")]
    OutOfBoundsPixel {
        track_id: u32,
        frame: usize,
        x: f64,
        y: f64,
    },
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, FormatError> {
    std::fs::read(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| FormatError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
    }
    std::fs::write(path, bytes).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Splits off `count` newline-terminated header lines. Returns the lines and
/// the byte offset of the payload.
pub(crate) fn header_lines(bytes: &[u8], count: usize) -> Result<(Vec<&str>, usize), FormatError> {
    let mut lines = Vec::with_capacity(count);
    let mut start = 0;
    for _ in 0..count {
        let end = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|p| start + p)
            .ok_or_else(|| FormatError::MalformedHeader("header ended early".into()))?;
        let line = std::str::from_utf8(&bytes[start..end])
            .map_err(|_| FormatError::MalformedHeader("header is not ASCII".into()))?;
        lines.push(line);
        start = end + 1;
    }
    Ok((lines, start))
}

/// Canonical unsigned decimal: ASCII digits, no sign, no leading zeros.
pub(crate) fn parse_canonical_usize(s: &str) -> Option<usize> {
    let canonical = !s.is_empty()
        && s.bytes().all(|b| b.is_ascii_digit())
        && (s == "0" || !s.starts_with('0'));
    if canonical {
        s.parse().ok()
    } else {
        None
    }
}

/// Parses `"<w> <h>"` with exactly one ASCII space.
pub(crate) fn parse_dims(line: &str) -> Result<(usize, usize), FormatError> {
    let bad = || FormatError::MalformedHeader(format!("bad dimensions line {line:?}"));
    let (w, h) = line.split_once(' ').ok_or_else(bad)?;
    Ok((
        parse_canonical_usize(w).ok_or_else(bad)?,
        parse_canonical_usize(h).ok_or_else(bad)?,
    ))
}

pub(crate) fn expect_payload(found: usize, expected: usize) -> Result<(), FormatError> {
    if found != expected {
        return Err(FormatError::TruncatedPayload { expected, found });
    }
    Ok(())
}
