//! Dynamic-pixel detection from the Sampson epipolar error of optical flow.

use std::collections::VecDeque;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{fundamental_matrix, CameraFrame, GeometryError};
use crate::io::FlowField;
use crate::raster::{in_bounds, Raster};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("flow is {flow:?} but camera expects {camera:?}")]
    DimensionMismatch {
        flow: (usize, usize),
        camera: (usize, usize),
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Per-pixel Sampson error for the frame pair `(frame, frame + 1)`. `NaN`
/// marks pixels whose flow target leaves the image.
#[derive(Debug, Clone, PartialEq)]
pub struct EpipolarErrorMap {
    pub frame: usize,
    pub errors: Raster<f64>,
}

/// Sampson distance of the correspondence `x -> x'` under `f`
/// (`x'ᵀ F x = 0` for consistent pairs). Zero when the denominator vanishes.
pub fn sampson_point(f: &Matrix3<f64>, x: &Vector3<f64>, xp: &Vector3<f64>) -> f64 {
    let fx = f * x;
    let ftxp = f.transpose() * xp;
    let num = xp.dot(&fx).powi(2);
    let den = fx[0] * fx[0] + fx[1] * fx[1] + ftxp[0] * ftxp[0] + ftxp[1] * ftxp[1];
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn sampson_error(flow: &FlowField, f: &Matrix3<f64>, frame: usize) -> EpipolarErrorMap {
    let (w, h) = (flow.width(), flow.height());
    let mut errors = Raster::filled(w, h, f64::NAN);
    for y in 0..h {
        for x in 0..w {
            let [u, v] = *flow.flow.get(x, y);
            let (tx, ty) = (x as f64 + u as f64, y as f64 + v as f64);
            if in_bounds(tx, ty, w, h) {
                *errors.get_mut(x, y) = sampson_point(
                    f,
                    &Vector3::new(x as f64, y as f64, 1.0),
                    &Vector3::new(tx, ty, 1.0),
                );
            }
        }
    }
    EpipolarErrorMap { frame, errors }
}

/// Error map of a frame pair, or `None` when the cameras share a centre and
/// the pair carries no epipolar constraint.
pub fn epipolar_errors(
    flow: &FlowField,
    cam_a: &CameraFrame,
    cam_b: &CameraFrame,
) -> Result<Option<EpipolarErrorMap>, DetectionError> {
    let dims = (flow.width(), flow.height());
    if dims != (cam_a.width, cam_a.height) {
        return Err(DetectionError::DimensionMismatch {
            flow: dims,
            camera: (cam_a.width, cam_a.height),
        });
    }
    match fundamental_matrix(cam_a, cam_b) {
        Ok(f) => Ok(Some(sampson_error(flow, &f, cam_a.frame_index))),
        Err(GeometryError::DegenerateBaseline(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// `error > tau` per pixel; `NaN` pixels are never dynamic.
pub fn threshold_dynamic(err: &EpipolarErrorMap, tau: f64) -> Raster<bool> {
    err.errors.map(|&e| e > tau)
}

/// Inclusive pixel bounds of one connected component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    /// Pixel count of the component (not of the box).
    pub area: usize,
}

impl BoundingBox {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }
}

/// Kept components of a dynamic mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicRegionSet {
    pub frame: usize,
    /// Union of the kept components.
    pub mask: Raster<bool>,
    /// One box per kept component, largest component first.
    pub boxes: Vec<BoundingBox>,
}

impl DynamicRegionSet {
    pub fn empty(frame: usize, width: usize, height: usize) -> Self {
        Self {
            frame,
            mask: Raster::filled(width, height, false),
            boxes: Vec::new(),
        }
    }
}

/// 8-connected components of `mask` with at least `min_area` pixels, each
/// returned with its pixel list.
pub fn connected_components(mask: &Raster<bool>, min_area: usize) -> Vec<(BoundingBox, Vec<(usize, usize)>)> {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.data[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            pixels.push((x, y));
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask.data[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if pixels.len() < min_area {
            continue;
        }
        let bbox = BoundingBox {
            x0: pixels.iter().map(|p| p.0).min().unwrap(),
            y0: pixels.iter().map(|p| p.1).min().unwrap(),
            x1: pixels.iter().map(|p| p.0).max().unwrap(),
            y1: pixels.iter().map(|p| p.1).max().unwrap(),
            area: pixels.len(),
        };
        out.push((bbox, pixels));
    }
    out.sort_by(|a, b| {
        b.0.area
            .cmp(&a.0.area)
            .then((a.0.y0, a.0.x0).cmp(&(b.0.y0, b.0.x0)))
    });
    out
}

pub fn extract_regions(mask: &Raster<bool>, min_area: usize, frame: usize) -> DynamicRegionSet {
    let mut set = DynamicRegionSet::empty(frame, mask.width, mask.height);
    for (bbox, pixels) in connected_components(mask, min_area) {
        for (x, y) in pixels {
            *set.mask.get_mut(x, y) = true;
        }
        set.boxes.push(bbox);
    }
    set
}

/// Default area floor: 0.05% of the image, at least one pixel.
pub fn default_min_area(width: usize, height: usize) -> usize {
    ((width * height) as f64 * 0.0005).ceil().max(1.0) as usize
}

/// Full per-pair detection. Degenerate pairs yield an empty set.
pub fn detect_frame(
    flow: &FlowField,
    cam_a: &CameraFrame,
    cam_b: &CameraFrame,
    tau: f64,
    min_area: usize,
) -> Result<DynamicRegionSet, DetectionError> {
    Ok(match epipolar_errors(flow, cam_a, cam_b)? {
        Some(err) => extract_regions(&threshold_dynamic(&err, tau), min_area, cam_a.frame_index),
        None => DynamicRegionSet::empty(cam_a.frame_index, flow.width(), flow.height()),
    })
}
