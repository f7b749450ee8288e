//! Instance mask tracking: prompts from dynamic regions, confidence
//! filtering, fixed-interval forward propagation and a reverse pass, against
//! a pluggable [`MaskProvider`].

mod provider;

pub use provider::{LabelProvider, MaskProvider, PropagatedMask, ProviderError};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{extract_regions, BoundingBox, DynamicRegionSet};
use crate::io::InstanceMaskFrame;
use crate::raster::Raster;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error("mask provider failed at frame {frame}: {message}")]
    ProviderFailure { frame: usize, message: String },
    #[error("propagation interval must be at least 1")]
    InvalidInterval,
    #[error("ran out of 16-bit instance IDs")]
    IdsExhausted,
}

impl From<ProviderError> for TrackingError {
    fn from(e: ProviderError) -> Self {
        TrackingError::ProviderFailure {
            frame: e.frame,
            message: e.message,
        }
    }
}

/// A segmentation proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub mask: Raster<bool>,
    pub confidence: f64,
}

impl Candidate {
    pub fn area(&self) -> usize {
        self.mask.data.iter().filter(|v| **v).count()
    }
}

/// Per-frame presence and confidence of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceTimeline {
    pub instance_id: u16,
    /// Frame index to provider confidence, for every frame with a mask.
    pub confidence: BTreeMap<usize, f64>,
}

impl InstanceTimeline {
    pub fn first_frame(&self) -> Option<usize> {
        self.confidence.keys().next().copied()
    }

    pub fn last_frame(&self) -> Option<usize> {
        self.confidence.keys().next_back().copied()
    }

    pub fn is_contiguous(&self) -> bool {
        match (self.first_frame(), self.last_frame()) {
            (Some(a), Some(b)) => b - a + 1 == self.confidence.len(),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingParams {
    pub tau_mask: f64,
    pub propagation_interval: usize,
    /// Candidates whose pixels are covered by existing or newly accepted
    /// masks beyond this fraction are treated as duplicates.
    pub duplicate_overlap: f64,
    pub min_area: usize,
}

impl Default for TrackingParams {
    fn default() -> Self {
        Self {
            tau_mask: 0.8,
            propagation_interval: 10,
            duplicate_overlap: 0.5,
            min_area: 1,
        }
    }
}

/// Boxes around dynamic pixels not yet claimed by a tracked instance.
pub fn compute_prompts(
    regions: &DynamicRegionSet,
    existing: &InstanceMaskFrame,
    min_area: usize,
) -> Vec<BoundingBox> {
    let mut remaining = regions.mask.clone();
    for (m, id) in remaining.data.iter_mut().zip(&existing.ids.data) {
        *m = *m && *id == 0;
    }
    extract_regions(&remaining, min_area, regions.frame).boxes
}

/// Keeps candidates with `confidence >= tau_mask` and hands out fresh,
/// strictly increasing IDs starting at `*next_id`.
pub fn accept_masks(
    candidates: Vec<Candidate>,
    tau_mask: f64,
    next_id: &mut u16,
) -> Result<Vec<(u16, Candidate)>, TrackingError> {
    let mut out = Vec::new();
    for c in candidates {
        if c.confidence < tau_mask {
            continue;
        }
        let id = *next_id;
        *next_id = next_id.checked_add(1).ok_or(TrackingError::IdsExhausted)?;
        out.push((id, c));
    }
    Ok(out)
}

/// Drops candidates that mostly repeat an existing instance or an earlier
/// candidate of the same batch.
pub fn suppress_duplicates(candidates: Vec<Candidate>, existing: &InstanceMaskFrame, max_overlap: f64) -> Vec<Candidate> {
    let mut claimed: Vec<bool> = existing.ids.data.iter().map(|id| *id != 0).collect();
    let mut out = Vec::new();
    for c in candidates {
        let area = c.area();
        if area == 0 {
            continue;
        }
        let covered = c.mask.data.iter().zip(&claimed).filter(|(m, k)| **m && **k).count();
        if covered as f64 > max_overlap * area as f64 {
            continue;
        }
        for (k, m) in claimed.iter_mut().zip(&c.mask.data) {
            *k |= *m;
        }
        out.push(c);
    }
    out
}

/// Per-frame instance layers before overlap resolution.
type Layers = Vec<BTreeMap<u16, (Raster<bool>, f64)>>;

/// Merges layers into one label raster: highest confidence wins a pixel,
/// ties go to the lower ID.
fn composite(frame: usize, width: usize, height: usize, layers: &BTreeMap<u16, (Raster<bool>, f64)>) -> InstanceMaskFrame {
    let mut out = InstanceMaskFrame::empty(frame, width, height);
    let mut best = vec![f64::NEG_INFINITY; width * height];
    for (&id, (mask, conf)) in layers {
        for i in 0..mask.len() {
            if mask.data[i] && *conf > best[i] {
                best[i] = *conf;
                out.ids.data[i] = id;
            }
        }
    }
    for id in out.present_ids() {
        out.confidence.insert(id, layers[&id].1);
    }
    out
}

/// Output of [`run_tracking`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingResult {
    pub timelines: Vec<InstanceTimeline>,
    pub masks: Vec<InstanceMaskFrame>,
}

/// Forward pass: at frame 0 and every `propagation_interval` frames, prompt
/// the provider with unexplained dynamic regions, accept confident new
/// instances, then propagate every live instance up to the next boundary.
/// `regions[t]` is `None` on frames the detector did not process. The
/// reverse pass runs afterwards (see [`reverse_propagate`]).
pub fn run_tracking(
    frame_count: usize,
    width: usize,
    height: usize,
    regions: &[Option<DynamicRegionSet>],
    provider: &mut dyn MaskProvider,
    params: &TrackingParams,
) -> Result<TrackingResult, TrackingError> {
    if params.propagation_interval == 0 {
        return Err(TrackingError::InvalidInterval);
    }
    let mut layers: Layers = vec![BTreeMap::new(); frame_count];
    let mut next_id: u16 = 1;
    for start in (0..frame_count).step_by(params.propagation_interval) {
        let end = (start + params.propagation_interval).min(frame_count - 1);
        if let Some(Some(reg)) = regions.get(start) {
            let existing = composite(start, width, height, &layers[start]);
            let prompts = compute_prompts(reg, &existing, params.min_area);
            if !prompts.is_empty() {
                let candidates = provider.prompt(start, &prompts)?;
                let confident: Vec<_> = candidates.into_iter().filter(|c| c.confidence >= params.tau_mask).collect();
                let fresh = suppress_duplicates(confident, &existing, params.duplicate_overlap);
                for (id, c) in accept_masks(fresh, params.tau_mask, &mut next_id)? {
                    layers[start].insert(id, (c.mask, c.confidence));
                }
            }
        }
        let live: Vec<(u16, Raster<bool>)> = layers[start]
            .iter()
            .map(|(id, (m, _))| (*id, m.clone()))
            .collect();
        for (id, seed) in live {
            for p in provider.propagate(start, &seed, start + 1..=end, false)? {
                layers[p.frame].insert(id, (p.mask, p.confidence));
            }
        }
    }
    Ok(finish(layers, width, height))
}

fn finish(layers: Layers, width: usize, height: usize) -> TrackingResult {
    let mut timelines: BTreeMap<u16, InstanceTimeline> = BTreeMap::new();
    for (frame, l) in layers.iter().enumerate() {
        for (&id, (_, conf)) in l {
            timelines
                .entry(id)
                .or_insert_with(|| InstanceTimeline {
                    instance_id: id,
                    confidence: BTreeMap::new(),
                })
                .confidence
                .insert(frame, *conf);
        }
    }
    let masks = layers
        .iter()
        .enumerate()
        .map(|(f, l)| composite(f, width, height, l))
        .collect();
    TrackingResult {
        timelines: timelines.into_values().collect(),
        masks,
    }
}

fn layers_of(result: &TrackingResult) -> Layers {
    result
        .masks
        .iter()
        .enumerate()
        .map(|(f, m)| {
            result
                .timelines
                .iter()
                .filter_map(|t| {
                    let conf = *t.confidence.get(&f)?;
                    Some((t.instance_id, (m.mask_of(t.instance_id), conf)))
                })
                .collect()
        })
        .collect()
}

/// Extends every instance that starts after frame 0 backwards from its
/// first frame until frame 0 or until the provider loses it.
pub fn reverse_propagate(
    result: TrackingResult,
    provider: &mut dyn MaskProvider,
) -> Result<TrackingResult, TrackingError> {
    let (width, height) = match result.masks.first() {
        Some(m) => (m.ids.width, m.ids.height),
        None => return Ok(result),
    };
    // Layers from the composited masks, so seeds are what the forward pass kept.
    let mut layers = layers_of(&result);
    for t in &result.timelines {
        let Some(first) = t.first_frame().filter(|&f| f > 0) else {
            continue;
        };
        let seed = result.masks[first].mask_of(t.instance_id);
        if !seed.data.iter().any(|v| *v) {
            continue;
        }
        for p in provider.propagate(first, &seed, 0..=first - 1, true)? {
            layers[p.frame].insert(t.instance_id, (p.mask, p.confidence));
        }
    }
    Ok(finish(layers, width, height))
}
