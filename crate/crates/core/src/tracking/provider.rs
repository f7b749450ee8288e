use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use crate::detection::BoundingBox;
use crate::io::InstanceMaskFrame;
use crate::raster::Raster;

use super::Candidate;

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderError {
    pub frame: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedMask {
    pub frame: usize,
    pub mask: Raster<bool>,
    pub confidence: f64,
}

/// A promptable video segmenter.
pub trait MaskProvider {
    /// One candidate per box the provider can segment.
    fn prompt(&mut self, frame: usize, boxes: &[BoundingBox]) -> Result<Vec<Candidate>, ProviderError>;

    /// Follows the object under `seed` (a mask at `seed_frame`) through
    /// `frames`, visited in descending order when `backward`. Stops at the
    /// first frame where the object is absent.
    fn propagate(
        &mut self,
        seed_frame: usize,
        seed: &Raster<bool>,
        frames: RangeInclusive<usize>,
        backward: bool,
    ) -> Result<Vec<PropagatedMask>, ProviderError>;
}

/// Provider backed by precomputed per-frame label rasters: rendered ground
/// truth for synthetic scenes, or masks produced by an external segmenter.
/// A prompt box selects the majority label inside it; propagation follows
/// that label.
#[derive(Debug, Clone)]
pub struct LabelProvider {
    frames: Vec<InstanceMaskFrame>,
}

impl LabelProvider {
    pub fn new(frames: Vec<InstanceMaskFrame>) -> Self {
        Self { frames }
    }

    fn frame(&self, f: usize) -> Result<&InstanceMaskFrame, ProviderError> {
        self.frames.get(f).ok_or_else(|| ProviderError {
            frame: f,
            message: format!("no label frame (have {})", self.frames.len()),
        })
    }

    fn majority(counts: BTreeMap<u16, usize>) -> Option<u16> {
        // Ties resolve to the smaller label because iteration is ascending.
        counts
            .into_iter()
            .fold(None, |best: Option<(u16, usize)>, (id, n)| match best {
                Some((_, m)) if m >= n => best,
                _ => Some((id, n)),
            })
            .map(|(id, _)| id)
    }

    fn candidate(frame: &InstanceMaskFrame, label: u16) -> (Raster<bool>, f64) {
        (
            frame.mask_of(label),
            frame.confidence.get(&label).copied().unwrap_or(1.0),
        )
    }
}

impl MaskProvider for LabelProvider {
    fn prompt(&mut self, f: usize, boxes: &[BoundingBox]) -> Result<Vec<Candidate>, ProviderError> {
        let frame = self.frame(f)?;
        let mut out = Vec::new();
        for b in boxes {
            let mut counts = BTreeMap::new();
            for y in b.y0..=b.y1.min(frame.ids.height - 1) {
                for x in b.x0..=b.x1.min(frame.ids.width - 1) {
                    let id = *frame.ids.get(x, y);
                    if id != 0 {
                        *counts.entry(id).or_insert(0usize) += 1;
                    }
                }
            }
            if let Some(label) = Self::majority(counts) {
                let (mask, confidence) = Self::candidate(frame, label);
                out.push(Candidate { mask, confidence });
            }
        }
        Ok(out)
    }

    fn propagate(
        &mut self,
        seed_frame: usize,
        seed: &Raster<bool>,
        frames: RangeInclusive<usize>,
        backward: bool,
    ) -> Result<Vec<PropagatedMask>, ProviderError> {
        let start = self.frame(seed_frame)?;
        let mut counts = BTreeMap::new();
        for (m, id) in seed.data.iter().zip(&start.ids.data) {
            if *m && *id != 0 {
                *counts.entry(*id).or_insert(0usize) += 1;
            }
        }
        let Some(label) = Self::majority(counts) else {
            return Ok(Vec::new());
        };
        let order: Vec<usize> = if backward {
            frames.rev().collect()
        } else {
            frames.collect()
        };
        let mut out = Vec::new();
        for f in order {
            let (mask, confidence) = Self::candidate(self.frame(f)?, label);
            if !mask.data.iter().any(|v| *v) {
                break;
            }
            out.push(PropagatedMask { frame: f, mask, confidence });
        }
        Ok(out)
    }
}
