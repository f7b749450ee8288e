//! Initial static and dynamic Gaussian sets.

mod laplacian;
mod record;

pub use laplacian::{log_magnitude, luma, LogMap};
pub use record::{DynamicMotion, GaussianKind, GaussianRecord};

use std::collections::BTreeSet;

use log::warn;
use nalgebra::{Vector2, Vector3};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{DeformationParams, PolyFourierCurve};
use crate::geometry::{CameraFrame, GeometryError};
use crate::io::{DepthMap, InstanceMaskFrame};
use crate::raster::{Raster, RgbImage};
use crate::scene_flow::Trajectory3D;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InitError {
    #[error("non-positive depth {0}")]
    NonPositiveDepth(f64),
    #[error("frame {0} has no static pixel with positive sampling weight")]
    AllMaskedFrame(usize),
    #[error("frame {0}: inputs disagree in size or count")]
    DimensionMismatch(usize),
    #[error("trajectory {0} has no query point")]
    MissingQuery(u32),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Pixel-radius model for initial scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub k_scale: f64,
    pub epsilon: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for ScaleParams {
    fn default() -> Self {
        Self {
            k_scale: 1.5,
            epsilon: 1e-4,
            r_min: 0.5,
            r_max: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitParams {
    pub sigma: f64,
    pub scale: ScaleParams,
    pub opacity: f64,
    pub static_stride: usize,
    pub n_per_frame: usize,
    pub seed: u64,
}

impl Default for InitParams {
    fn default() -> Self {
        Self {
            sigma: 1.6,
            scale: ScaleParams::default(),
            opacity: 0.1,
            static_stride: 20,
            n_per_frame: 4000,
            seed: 0,
        }
    }
}

/// Isotropic scale from the local detail level: a pixel radius
/// `clamp(k / (LoG + ε), r_min, r_max)` converted to scene units by `depth / fx`.
pub fn scale_from_log(log_value: f64, depth: f64, fx: f64, p: &ScaleParams) -> Result<f64, InitError> {
    if !(depth > 0.0) {
        return Err(InitError::NonPositiveDepth(depth));
    }
    let radius = (p.k_scale / (log_value + p.epsilon)).clamp(p.r_min, p.r_max);
    Ok(radius * depth / fx)
}

pub fn estimate_scale(
    log_map: &LogMap,
    depth: &DepthMap,
    cam: &CameraFrame,
    pixel: (usize, usize),
    p: &ScaleParams,
) -> Result<Vector3<f64>, InitError> {
    let d = *depth.depth.get(pixel.0, pixel.1) as f64;
    let s = scale_from_log(log_map.at(pixel.0, pixel.1), d, cam.fx(), p)?;
    Ok(Vector3::repeat(s))
}

/// Sampling weights: LoG magnitude on static pixels with valid depth, zero elsewhere.
pub fn static_weights(log_map: &LogMap, mask: &InstanceMaskFrame, depth: &DepthMap) -> Raster<f64> {
    let mut w = log_map.values.clone();
    for (i, v) in w.data.iter_mut().enumerate() {
        if mask.ids.data[i] != 0 || !(depth.depth.data[i] > 0.0) {
            *v = 0.0;
        }
    }
    w
}

/// Draws `n` pixels with replacement, probability proportional to `weights`.
/// `None` when every weight is zero.
pub fn sample_pixels(weights: &Raster<f64>, n: usize, rng: &mut ChaCha8Rng) -> Option<Vec<(usize, usize)>> {
    let dist = WeightedIndex::new(&weights.data).ok()?;
    Some(
        (0..n)
            .map(|_| {
                let i = dist.sample(rng);
                (i % weights.width, i / weights.width)
            })
            .collect(),
    )
}

pub(crate) fn frame_seed(seed: u64, frame: usize) -> u64 {
    crate::scene_flow::mix_seed(seed, frame as u64 + 1)
}

/// The per-frame inputs shared by static and dynamic initialization.
#[derive(Debug, Clone, Copy)]
pub struct FrameInputs<'a> {
    pub images: &'a [RgbImage],
    pub masks: &'a [InstanceMaskFrame],
    pub depths: &'a [DepthMap],
    pub cams: &'a [CameraFrame],
    pub log_maps: &'a [LogMap],
}

impl FrameInputs<'_> {
    fn check(&self, frame: usize) -> Result<(), InitError> {
        let ok = frame < self.images.len()
            && frame < self.masks.len()
            && frame < self.depths.len()
            && frame < self.cams.len()
            && frame < self.log_maps.len()
            && self.images[frame].same_shape(&self.masks[frame].ids)
            && self.images[frame].same_shape(&self.depths[frame].depth)
            && self.images[frame].same_shape(&self.log_maps[frame].values);
        ok.then_some(()).ok_or(InitError::DimensionMismatch(frame))
    }
}

/// LoG maps for every frame, computed in parallel.
pub fn log_maps(images: &[RgbImage], sigma: f64) -> Vec<LogMap> {
    images.par_iter().map(|im| log_magnitude(im, sigma)).collect()
}

fn sample_frame(inputs: &FrameInputs, frame: usize, p: &InitParams) -> Result<Vec<GaussianRecord>, InitError> {
    inputs.check(frame)?;
    let (image, depth, cam) = (&inputs.images[frame], &inputs.depths[frame], &inputs.cams[frame]);
    let log_map = &inputs.log_maps[frame];
    let weights = static_weights(log_map, &inputs.masks[frame], depth);
    let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(p.seed, frame));
    let pixels = sample_pixels(&weights, p.n_per_frame, &mut rng).ok_or(InitError::AllMaskedFrame(frame))?;
    pixels
        .into_iter()
        .map(|(x, y)| {
            let d = *depth.depth.get(x, y) as f64;
            let mu = cam.unproject(&Vector2::new(x as f64, y as f64), d)?;
            let s = estimate_scale(log_map, depth, cam, (x, y), &p.scale)?;
            let c = image.get(x, y);
            let mut rec = GaussianRecord::new_static(mu, s[0], p.opacity, [c[0] as f64, c[1] as f64, c[2] as f64]);
            rec.scale = s;
            Ok(rec)
        })
        .collect()
}

/// Static Gaussians from every `stride`-th frame. Frames without any
/// eligible pixel are skipped with a warning.
pub fn sample_static(inputs: &FrameInputs, p: &InitParams) -> Result<Vec<GaussianRecord>, InitError> {
    let stride = p.static_stride.max(1);
    let frames: Vec<usize> = (0..inputs.cams.len()).step_by(stride).collect();
    let per_frame: Vec<Result<Vec<GaussianRecord>, InitError>> =
        frames.par_iter().map(|&f| sample_frame(inputs, f, p)).collect();
    let mut out = Vec::new();
    for r in per_frame {
        match r {
            Ok(v) => out.extend(v),
            Err(InitError::AllMaskedFrame(f)) => warn!("frame {f}: no static pixel to sample, skipped"),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// One dynamic Gaussian per trajectory, colored and scaled at the
/// trajectory's query pixel. `curves[i]` is the fit of `trajectories[i]`.
pub fn init_dynamic(
    trajectories: &[Trajectory3D],
    curves: &[PolyFourierCurve],
    inputs: &FrameInputs,
    p: &InitParams,
) -> Result<Vec<GaussianRecord>, InitError> {
    assert_eq!(trajectories.len(), curves.len(), "one curve per trajectory");
    trajectories
        .par_iter()
        .zip(curves.par_iter())
        .map(|(tr, curve)| {
            let q = tr.query.ok_or(InitError::MissingQuery(tr.track_id))?;
            inputs.check(q.frame)?;
            let image = &inputs.images[q.frame];
            let (x, y) = image
                .nearest_pixel(q.x, q.y)
                .ok_or(InitError::DimensionMismatch(q.frame))?;
            let cam = &inputs.cams[q.frame];
            let mut depth = *inputs.depths[q.frame].depth.get(x, y) as f64;
            if !(depth > 0.0) {
                let p_world = tr.positions[q.frame].ok_or(InitError::MissingQuery(tr.track_id))?;
                depth = cam.to_camera(&p_world).z;
            }
            let s = scale_from_log(inputs.log_maps[q.frame].at(x, y), depth, cam.fx(), &p.scale)?;
            let c = image.get(x, y);
            Ok(GaussianRecord::new_dynamic(
                DeformationParams::from_position_curve(curve.clone()),
                tr.instance_id,
                tr.track_id,
                s,
                p.opacity,
                [c[0] as f64, c[1] as f64, c[2] as f64],
            ))
        })
        .collect()
}

/// Which dynamic instances survive an edit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstanceSelection {
    All,
    Keep(BTreeSet<u16>),
    Remove(BTreeSet<u16>),
}

pub fn filter_by_instance(records: &[GaussianRecord], selection: &InstanceSelection, keep_static: bool) -> Vec<GaussianRecord> {
    records
        .iter()
        .filter(|r| match r.instance_id() {
            None => keep_static,
            Some(id) => match selection {
                InstanceSelection::All => true,
                InstanceSelection::Keep(set) => set.contains(&id),
                InstanceSelection::Remove(set) => !set.contains(&id),
            },
        })
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::BasisSpec;
    use nalgebra::Matrix3;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn scale_is_linear_in_depth() {
        let p = ScaleParams::default();
        let a = scale_from_log(0.3, 2.0, 100.0, &p).unwrap();
        let b = scale_from_log(0.3, 4.0, 100.0, &p).unwrap();
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn scale_decreases_with_detail() {
        let p = ScaleParams::default();
        let sweep: Vec<f64> = (0..200)
            .map(|i| scale_from_log(i as f64 * 0.05, 3.0, 80.0, &p).unwrap())
            .collect();
        assert!(sweep.windows(2).all(|w| w[1] <= w[0]));
        let strict: Vec<f64> = [0.3, 0.5, 1.0, 2.0]
            .iter()
            .map(|&l| scale_from_log(l, 3.0, 80.0, &p).unwrap())
            .collect();
        assert!(strict.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn zero_detail_clamps_to_max() {
        let p = ScaleParams::default();
        assert_eq!(scale_from_log(0.0, 5.0, 100.0, &p).unwrap(), 8.0 * 5.0 / 100.0);
        assert_eq!(
            scale_from_log(0.0, 0.0, 100.0, &p),
            Err(InitError::NonPositiveDepth(0.0))
        );
    }

    fn checkerboard(w: usize, h: usize) -> RgbImage {
        let mut img = Raster::filled(w, h, [0.0; 3]);
        for y in 0..h {
            for x in 0..w {
                let v = if (x / 2 + y / 2) % 2 == 0 { 0.9 } else { 0.1 };
                *img.get_mut(x, y) = [v, v, v];
            }
        }
        img
    }

    fn camera(frame: usize, w: usize, h: usize) -> CameraFrame {
        CameraFrame::new(
            frame,
            CameraFrame::intrinsics(50.0, 50.0, w as f64 / 2.0, h as f64 / 2.0),
            Matrix3::identity(),
            Vector3::zeros(),
            w,
            h,
        )
        .unwrap()
    }

    #[test]
    fn uniform_texture_samples_uniformly() {
        let img = checkerboard(64, 64);
        let log_map = log_magnitude(&img, 1.6);
        let mask = InstanceMaskFrame::empty(0, 64, 64);
        let depth = DepthMap::new(0, Raster::filled(64, 64, 2.0)).unwrap();
        let weights = static_weights(&log_map, &mask, &depth);
        let n = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pixels = sample_pixels(&weights, n, &mut rng).unwrap();
        let bin = |x: usize, y: usize| (y / 16) * 4 + x / 16;
        let mut observed = [0.0f64; 16];
        for &(x, y) in &pixels {
            observed[bin(x, y)] += 1.0;
        }
        let mut mass = [0.0f64; 16];
        for y in 0..64 {
            for x in 0..64 {
                mass[bin(x, y)] += *weights.get(x, y);
            }
        }
        let total: f64 = mass.iter().sum();
        let chi2: f64 = observed
            .iter()
            .zip(&mass)
            .map(|(o, m)| {
                let e = n as f64 * m / total;
                (o - e).powi(2) / e
            })
            .sum();
        let p_value = 1.0 - ChiSquared::new(15.0).unwrap().cdf(chi2);
        assert!(p_value > 0.01, "chi2 {chi2}, p {p_value}");
    }

    fn inputs_for(
        images: Vec<RgbImage>,
        masks: Vec<InstanceMaskFrame>,
    ) -> (Vec<RgbImage>, Vec<InstanceMaskFrame>, Vec<DepthMap>, Vec<CameraFrame>, Vec<LogMap>) {
        let n = images.len();
        let (w, h) = (images[0].width, images[0].height);
        let depths = (0..n).map(|f| DepthMap::new(f, Raster::filled(w, h, 2.0)).unwrap()).collect();
        let cams = (0..n).map(|f| camera(f, w, h)).collect();
        let logs = log_maps(&images, 1.6);
        (images, masks, depths, cams, logs)
    }

    #[test]
    fn fully_dynamic_frame_yields_nothing() {
        let mut mask = InstanceMaskFrame::empty(0, 16, 16);
        mask.ids.data.iter_mut().for_each(|v| *v = 1);
        mask.confidence.insert(1, 1.0);
        let (im, ma, de, ca, lo) = inputs_for(vec![checkerboard(16, 16)], vec![mask]);
        let inputs = FrameInputs { images: &im, masks: &ma, depths: &de, cams: &ca, log_maps: &lo };
        let recs = sample_static(&inputs, &InitParams { static_stride: 1, n_per_frame: 50, ..Default::default() }).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn stride_equal_to_length_uses_first_frame_only() {
        let frames = 4;
        let mut masks: Vec<_> = (0..frames).map(|f| InstanceMaskFrame::empty(f, 16, 16)).collect();
        // Only the left half of frame 0 is static; later frames are fully static.
        for y in 0..16 {
            for x in 8..16 {
                *masks[0].ids.get_mut(x, y) = 1;
            }
        }
        masks[0].confidence.insert(1, 1.0);
        let (im, ma, de, ca, lo) = inputs_for(vec![checkerboard(16, 16); frames], masks);
        let inputs = FrameInputs { images: &im, masks: &ma, depths: &de, cams: &ca, log_maps: &lo };
        let p = InitParams { static_stride: frames, n_per_frame: 100, ..Default::default() };
        let recs = sample_static(&inputs, &p).unwrap();
        assert_eq!(recs.len(), 100);
        for r in &recs {
            let (px, _) = ca[0].project(&r.position).unwrap();
            assert!(px.x < 7.5, "sample inside the instance mask at x = {}", px.x);
            assert_eq!(r.opacity, 0.1);
            assert_eq!(r.kind(), GaussianKind::Static);
        }
        assert_eq!(recs, sample_static(&inputs, &p).unwrap());
    }

    #[test]
    fn dynamic_records_follow_trajectories() {
        let spec = BasisSpec::new(1, 0, std::f64::consts::TAU, 3).unwrap();
        let (im, ma, de, ca, lo) = inputs_for(
            vec![checkerboard(16, 16); 3],
            (0..3).map(|f| InstanceMaskFrame::empty(f, 16, 16)).collect(),
        );
        let inputs = FrameInputs { images: &im, masks: &ma, depths: &de, cams: &ca, log_maps: &lo };
        let mut tr = Trajectory3D::new(9, 3);
        tr.instance_id = 2;
        for t in 0..3 {
            tr.set(t, Vector3::new(0.1 * t as f64, 0.0, 2.0), crate::scene_flow::Provenance::Observed);
        }
        tr.query = Some(crate::scene_flow::QueryPoint { frame: 1, x: 10.5, y: 8.0 });
        let fitter = crate::encoding::TrajectoryFitter::new(spec, 0.0).unwrap();
        let fit = fitter.fit(&tr.dense_positions().unwrap()).unwrap();
        let recs = init_dynamic(std::slice::from_ref(&tr), &[fit.curve], &inputs, &InitParams::default()).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.instance_id(), Some(2));
        assert!((r.position_at(spec.tau(1)) - tr.positions[1].unwrap()).norm() < 1e-10);
        let c = im[1].get(11, 8);
        assert_eq!(r.color, [c[0] as f64, c[1] as f64, c[2] as f64]);
    }

    #[test]
    fn instance_filters() {
        let spec = BasisSpec::new(0, 0, 1.0, 2).unwrap();
        let dyn_rec = |id| {
            GaussianRecord::new_dynamic(
                DeformationParams::from_position_curve(PolyFourierCurve::zeros(spec, 3)),
                id,
                id as u32,
                0.1,
                0.1,
                [0.0; 3],
            )
        };
        let recs = vec![
            GaussianRecord::new_static(Vector3::zeros(), 0.1, 0.1, [0.0; 3]),
            dyn_rec(1),
            dyn_rec(2),
            dyn_rec(1),
        ];
        assert_eq!(filter_by_instance(&recs, &InstanceSelection::All, true), recs);
        let removed = filter_by_instance(&recs, &InstanceSelection::Remove([1].into()), true);
        assert_eq!(removed.len(), 2);
        assert!(removed.iter().all(|r| r.instance_id() != Some(1)));
        let isolated = filter_by_instance(&recs, &InstanceSelection::Keep([2].into()), false);
        assert_eq!(isolated.len(), 1);
        assert_eq!(isolated[0].instance_id(), Some(2));
    }
}
