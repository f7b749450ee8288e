use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::raster::Raster;

use super::{
    expect_payload, header_lines, parse_canonical_usize, parse_dims, read_file, write_file,
    FormatError,
};

/// Per-pixel instance labels for one frame. `0` is static background.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMaskFrame {
    pub frame_index: usize,
    pub ids: Raster<u16>,
    /// Confidence in `[0, 1]` for every nonzero ID present in `ids`.
    pub confidence: BTreeMap<u16, f64>,
}

impl InstanceMaskFrame {
    pub fn empty(frame_index: usize, width: usize, height: usize) -> Self {
        Self {
            frame_index,
            ids: Raster::filled(width, height, 0),
            confidence: BTreeMap::new(),
        }
    }

    /// Distinct nonzero IDs present in the raster, ascending.
    pub fn present_ids(&self) -> Vec<u16> {
        let mut seen = std::collections::BTreeSet::new();
        for &id in &self.ids.data {
            if id != 0 {
                seen.insert(id);
            }
        }
        seen.into_iter().collect()
    }

    pub fn mask_of(&self, id: u16) -> Raster<bool> {
        self.ids.map(|&v| v == id)
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        if self.confidence.contains_key(&0) {
            return Err(FormatError::InvalidValue(
                "ID 0 (static) must not carry a confidence".into(),
            ));
        }
        if let Some((id, c)) = self.confidence.iter().find(|(_, c)| !(0.0..=1.0).contains(*c)) {
            return Err(FormatError::InvalidValue(format!(
                "confidence {c} for instance {id} is outside [0, 1]"
            )));
        }
        for id in self.present_ids() {
            if !self.confidence.contains_key(&id) {
                return Err(FormatError::ConfidenceMissingForId(id));
            }
        }
        Ok(())
    }
}

/// Binary 16-bit PGM (`P5`, maxval 65535, big-endian samples).
pub fn encode_pgm16(raster: &Raster<u16>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", raster.width, raster.height).into_bytes();
    out.reserve(raster.len() * 2);
    for v in &raster.data {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn decode_pgm16(bytes: &[u8]) -> Result<Raster<u16>, FormatError> {
    let (lines, offset) = header_lines(bytes, 3)?;
    if lines[0] != "P5" {
        return Err(FormatError::MalformedHeader(format!(
            "expected binary PGM magic \"P5\", found {:?}",
            lines[0]
        )));
    }
    let (width, height) = parse_dims(lines[1])?;
    if parse_canonical_usize(lines[2]) != Some(65535) {
        return Err(FormatError::MalformedHeader(format!(
            "expected maxval 65535, found {:?}",
            lines[2]
        )));
    }
    let payload = &bytes[offset..];
    expect_payload(payload.len(), width * height * 2)?;
    let data = payload
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok(Raster {
        width,
        height,
        data,
    })
}

pub fn write_pgm16(path: impl AsRef<Path>, raster: &Raster<u16>) -> Result<(), FormatError> {
    write_file(path.as_ref(), &encode_pgm16(raster))
}

pub fn read_pgm16(path: impl AsRef<Path>) -> Result<Raster<u16>, FormatError> {
    decode_pgm16(&read_file(path.as_ref())?)
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    frame: usize,
    confidence: BTreeMap<u16, f64>,
}

fn sidecar_path(pgm: &Path) -> PathBuf {
    pgm.with_extension("json")
}

/// Writes `<path>` (PGM) and its `<path stem>.json` confidence sidecar.
pub fn write_masks(path: impl AsRef<Path>, masks: &InstanceMaskFrame) -> Result<(), FormatError> {
    let path = path.as_ref();
    masks.validate()?;
    write_pgm16(path, &masks.ids)?;
    let sidecar = Sidecar {
        frame: masks.frame_index,
        confidence: masks.confidence.clone(),
    };
    write_file(&sidecar_path(path), &serde_json::to_vec_pretty(&sidecar)?)
}

/// Reads a mask PGM and its sidecar. A missing sidecar is allowed only when
/// the mask holds no instances; `frame_index` is used in that case.
pub fn read_masks(path: impl AsRef<Path>, frame_index: usize) -> Result<InstanceMaskFrame, FormatError> {
    let path = path.as_ref();
    let ids = read_pgm16(path)?;
    let side = sidecar_path(path);
    let (frame_index, confidence) = if side.exists() {
        let s: Sidecar = serde_json::from_slice(&read_file(&side)?)?;
        (s.frame, s.confidence)
    } else {
        (frame_index, BTreeMap::new())
    };
    let m = InstanceMaskFrame {
        frame_index,
        ids,
        confidence,
    };
    m.validate()?;
    Ok(m)
}
