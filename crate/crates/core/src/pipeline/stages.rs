use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::detection::{epipolar_errors, extract_regions, threshold_dynamic, DynamicRegionSet};
use crate::encoding::{BasisSpec, TrajectoryFitter};
use crate::geometry::CameraFrame;
use crate::init::{init_dynamic, log_maps, sample_static, FrameInputs};
use crate::io::{
    read_cameras, read_flo, read_masks, read_pfm, read_pgm16, read_rgb_png, read_tracks, write_gaussians_ply,
    write_masks, write_pgm16, DepthMap, FormatError, InstanceMaskFrame, TrackTable,
};
use crate::raster::{Raster, RgbImage};
use crate::scene_flow::{apply_assignment, assign_tracks, lift_tracks, reconstruct, RefineConfig, Trajectory3D};
use crate::synthetic::{render_frame, render_tracks, DatasetPaths, SceneSpec};
use crate::tracking::{reverse_propagate, run_tracking, LabelProvider, TrackingParams};

use super::files::{
    read_coefficients, read_trajectories, write_coefficients, write_trajectories, EncodedTrack, FrameRegions,
};
use super::{fail, require, ManifestBuilder, OutputLayout, PipelineConfig, PipelineError, ProviderKind, Stage, StageFailure};

fn invalid(stage: Stage, msg: impl Into<String>) -> PipelineError {
    PipelineError::Stage {
        stage,
        source: StageFailure::Invalid(msg.into()),
    }
}

fn write_json<T: Serialize>(stage: Stage, path: &Path, value: &T) -> Result<(), PipelineError> {
    let bytes = serde_json::to_vec_pretty(value).map_err(|e| fail::<FormatError>(stage)(e.into()))?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| io_fail(stage, parent, source))?;
    }
    std::fs::write(path, bytes).map_err(|source| io_fail(stage, path, source))
}

fn read_json<T: serde::de::DeserializeOwned>(stage: Stage, path: &Path) -> Result<T, PipelineError> {
    let bytes = std::fs::read(path).map_err(|source| io_fail(stage, path, source))?;
    serde_json::from_slice(&bytes).map_err(|e| fail::<FormatError>(stage)(e.into()))
}

fn io_fail(stage: Stage, path: &Path, source: std::io::Error) -> PipelineError {
    fail::<FormatError>(stage)(FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load_cameras(stage: Stage, paths: &DatasetPaths, mb: &mut ManifestBuilder) -> Result<Vec<CameraFrame>, PipelineError> {
    let path = require(stage, paths.cameras())?;
    mb.input(&path)?;
    let cams = read_cameras(&path).map_err(fail(stage))?;
    if cams.is_empty() {
        return Err(invalid(stage, "camera file lists no frames"));
    }
    let (w, h) = (cams[0].width, cams[0].height);
    if cams.iter().any(|c| (c.width, c.height) != (w, h)) {
        return Err(invalid(stage, "cameras disagree on image size"));
    }
    Ok(cams)
}

/// Reads one file per frame in parallel, hashing each as an input.
fn per_frame<T: Send>(
    stage: Stage,
    frames: &[usize],
    path_of: impl Fn(usize) -> PathBuf + Sync,
    read: impl Fn(&Path, usize) -> Result<T, StageFailure> + Sync,
    mb: &mut ManifestBuilder,
) -> Result<Vec<T>, PipelineError> {
    let paths = frames
        .iter()
        .map(|&f| require(stage, path_of(f)))
        .collect::<Result<Vec<_>, _>>()?;
    for p in &paths {
        mb.input(p)?;
    }
    paths
        .par_iter()
        .zip(frames.par_iter())
        .map(|(p, &f)| read(p, f).map_err(|source| PipelineError::Stage { stage, source }))
        .collect()
}

fn load_depths(stage: Stage, paths: &DatasetPaths, t: usize, mb: &mut ManifestBuilder) -> Result<Vec<DepthMap>, PipelineError> {
    let frames: Vec<usize> = (0..t).collect();
    per_frame(
        stage,
        &frames,
        |f| paths.depth(f),
        |p, f| Ok(DepthMap::new(f, read_pfm(p)?)?),
        mb,
    )
}

fn load_images(stage: Stage, paths: &DatasetPaths, t: usize, mb: &mut ManifestBuilder) -> Result<Vec<RgbImage>, PipelineError> {
    let frames: Vec<usize> = (0..t).collect();
    per_frame(stage, &frames, |f| paths.image(f), |p, _| Ok(read_rgb_png(p)?), mb)
}

fn load_track_masks(
    stage: Stage,
    layout: &OutputLayout,
    t: usize,
    mb: &mut ManifestBuilder,
) -> Result<Vec<InstanceMaskFrame>, PipelineError> {
    let frames: Vec<usize> = (0..t).collect();
    for &f in &frames {
        let side = layout.track_mask(f).with_extension("json");
        if side.exists() {
            mb.input(&side)?;
        }
    }
    per_frame(stage, &frames, |f| layout.track_mask(f), |p, f| Ok(read_masks(p, f)?), mb)
}

fn check_shape<T, U>(stage: Stage, what: &str, a: &Raster<T>, b: &Raster<U>) -> Result<(), PipelineError> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(invalid(
            stage,
            format!("{what} is {}x{}, expected {}x{}", a.width, a.height, b.width, b.height),
        ))
    }
}

/// Epipolar detection on every `stride`-th frame pair.
pub fn run_detect(cfg: &PipelineConfig, layout: &OutputLayout) -> Result<super::StageManifest, PipelineError> {
    const S: Stage = Stage::Detect;
    let paths = DatasetPaths::new(&cfg.dataset);
    let mut mb = ManifestBuilder::new(S, cfg, layout);
    let cams = load_cameras(S, &paths, &mut mb)?;
    if cams.len() < 2 {
        return Err(invalid(S, "detection needs at least two frames"));
    }
    require(S, paths.flow_dir())?;
    let (w, h) = (cams[0].width, cams[0].height);
    let min_area = cfg.detect.min_area(w, h);
    let frames: Vec<usize> = (0..cams.len() - 1).step_by(cfg.detect.stride).collect();
    let flows = per_frame(S, &frames, |f| paths.flow(f), |p, _| Ok(read_flo(p)?), &mut mb)?;
    let results: Vec<(FrameRegions, Raster<bool>)> = frames
        .par_iter()
        .zip(flows.par_iter())
        .map(|(&f, flow)| {
            let errors = epipolar_errors(flow, &cams[f], &cams[f + 1]).map_err(fail(S))?;
            let (set, degenerate) = match errors {
                Some(e) => (extract_regions(&threshold_dynamic(&e, cfg.detect.tau_epi), min_area, f), false),
                None => (DynamicRegionSet::empty(f, w, h), true),
            };
            let summary = FrameRegions {
                frame: f,
                degenerate,
                dynamic_pixels: set.mask.data.iter().filter(|v| **v).count(),
                boxes: set.boxes,
            };
            Ok((summary, set.mask))
        })
        .collect::<Result<_, PipelineError>>()?;
    let mut summaries = Vec::with_capacity(results.len());
    for (summary, mask) in results {
        if summary.degenerate {
            warn!("frame {}: cameras share a centre, no epipolar constraint", summary.frame);
        }
        let path = layout.detect_mask(summary.frame);
        write_pgm16(&path, &mask.map(|v| u16::from(*v))).map_err(fail(S))?;
        mb.output(&path)?;
        summaries.push(summary);
    }
    write_json(S, &layout.regions(), &summaries)?;
    mb.output(&layout.regions())?;
    info!("detect: {} frames, {} regions", summaries.len(), summaries.iter().map(|s| s.boxes.len()).sum::<usize>());
    mb.finish()
}

fn load_provider_masks(
    cfg: &PipelineConfig,
    paths: &DatasetPaths,
    t: usize,
    mb: &mut ManifestBuilder,
) -> Result<Vec<InstanceMaskFrame>, PipelineError> {
    const S: Stage = Stage::Track;
    let dir: PathBuf = match cfg.track.provider {
        ProviderKind::Oracle => paths.gt_masks_dir(),
        ProviderKind::Files => PathBuf::from(&cfg.track.provider_dir),
    };
    let dir = require(S, dir)?;
    let frames: Vec<usize> = (0..t).collect();
    for &f in &frames {
        let side = dir.join(format!("{f:05}.json"));
        if side.exists() {
            mb.input(&side)?;
        }
    }
    per_frame(S, &frames, |f| dir.join(format!("{f:05}.pgm")), |p, f| Ok(read_masks(p, f)?), mb)
}

/// Prompted instance tracking followed by the reverse pass.
pub fn run_track(cfg: &PipelineConfig, layout: &OutputLayout) -> Result<super::StageManifest, PipelineError> {
    const S: Stage = Stage::Track;
    let paths = DatasetPaths::new(&cfg.dataset);
    let mut mb = ManifestBuilder::new(S, cfg, layout);
    let cams = load_cameras(S, &paths, &mut mb)?;
    let (t, w, h) = (cams.len(), cams[0].width, cams[0].height);
    let regions_path = require(S, layout.regions())?;
    mb.input(&regions_path)?;
    let summaries: Vec<FrameRegions> = read_json(S, &regions_path)?;
    let mut regions: Vec<Option<DynamicRegionSet>> = vec![None; t];
    for s in summaries {
        if s.frame >= t {
            return Err(invalid(S, format!("region frame {} beyond sequence length {t}", s.frame)));
        }
        let path = require(S, layout.detect_mask(s.frame))?;
        mb.input(&path)?;
        let mask = read_pgm16(&path).map_err(fail(S))?;
        if (mask.width, mask.height) != (w, h) {
            return Err(invalid(S, format!("detection mask {} has the wrong size", path.display())));
        }
        regions[s.frame] = Some(DynamicRegionSet {
            frame: s.frame,
            mask: mask.map(|v| *v != 0),
            boxes: s.boxes,
        });
    }
    let labels = load_provider_masks(cfg, &paths, t, &mut mb)?;
    for m in &labels {
        check_shape(S, "provider mask", &m.ids, &Raster::filled(w, h, ()))?;
    }
    let mut provider = LabelProvider::new(labels);
    let params = TrackingParams {
        tau_mask: cfg.track.tau_mask,
        propagation_interval: cfg.track.propagation_interval,
        duplicate_overlap: cfg.track.duplicate_overlap,
        min_area: cfg.detect.min_area(w, h),
    };
    let forward = run_tracking(t, w, h, &regions, &mut provider, &params).map_err(fail(S))?;
    let result = reverse_propagate(forward, &mut provider).map_err(fail(S))?;
    for m in &result.masks {
        let path = layout.track_mask(m.frame_index);
        write_masks(&path, m).map_err(fail(S))?;
        mb.output(&path)?;
        mb.output(&path.with_extension("json"))?;
    }
    for tl in &result.timelines {
        if !tl.is_contiguous() {
            warn!("instance {} has a gap in its timeline", tl.instance_id);
        }
    }
    write_json(S, &layout.timelines(), &result.timelines)?;
    mb.output(&layout.timelines())?;
    info!("track: {} instances", result.timelines.len());
    mb.finish()
}

/// Tracks from `tracks.csv`, or sampled from the scene spec when the dataset
/// ships none.
fn load_tracks(
    cfg: &PipelineConfig,
    paths: &DatasetPaths,
    w: usize,
    h: usize,
    mb: &mut ManifestBuilder,
) -> Result<TrackTable, PipelineError> {
    const S: Stage = Stage::Flow;
    let csv = paths.tracks();
    if csv.exists() {
        mb.input(&csv)?;
        return read_tracks(&csv, w, h).map_err(fail(S));
    }
    let spec_path = paths.scene();
    if !spec_path.exists() {
        return Err(PipelineError::MissingInput { stage: S, path: csv });
    }
    mb.input(&spec_path)?;
    let spec: SceneSpec = read_json(S, &spec_path)?;
    let scene = spec.build().map_err(fail(S))?;
    if (scene.spec.width, scene.spec.height) != (w, h) {
        return Err(invalid(S, "scene spec and cameras disagree on image size"));
    }
    let renders: Vec<_> = (0..scene.frame_count()).into_par_iter().map(|f| render_frame(&scene, f)).collect();
    info!("flow: sampling {} tracks from the scene spec", cfg.flow.query_points);
    Ok(render_tracks(&scene, &renders, cfg.flow.query_points, cfg.seed).table)
}

/// Lifting, per-instance rigid refinement and gap filling.
pub fn run_flow(cfg: &PipelineConfig, layout: &OutputLayout) -> Result<super::StageManifest, PipelineError> {
    const S: Stage = Stage::Flow;
    let paths = DatasetPaths::new(&cfg.dataset);
    let mut mb = ManifestBuilder::new(S, cfg, layout);
    let cams = load_cameras(S, &paths, &mut mb)?;
    let (t, w, h) = (cams.len(), cams[0].width, cams[0].height);
    let depths = load_depths(S, &paths, t, &mut mb)?;
    for d in &depths {
        check_shape(S, "depth map", &d.depth, &Raster::filled(w, h, ()))?;
    }
    let masks = load_track_masks(S, layout, t, &mut mb)?;
    let tracks = load_tracks(cfg, &paths, w, h, &mut mb)?;
    let assignment = assign_tracks(&tracks, &masks);
    let lifted = apply_assignment(lift_tracks(&tracks, &depths, &cams), &assignment);
    info!("flow: {} of {} tracks on dynamic instances", lifted.len(), assignment.len());
    let refine = RefineConfig {
        max_iters: cfg.flow.ransac_max_iters,
        inlier_tol_fraction: cfg.flow.inlier_tol_fraction,
        seed: cfg.seed,
    };
    let (trajectories, motions) = reconstruct(lifted, &refine).map_err(fail(S))?;
    write_trajectories(&layout.trajectories(), &trajectories, &tracks).map_err(fail(S))?;
    mb.output(&layout.trajectories())?;
    write_json(S, &layout.motions(), &motions)?;
    mb.output(&layout.motions())?;
    mb.finish()
}

#[derive(Serialize)]
struct BasisRecord {
    spec: BasisSpec,
    ridge: f64,
    columns: Vec<String>,
    condition: f64,
}

fn basis_spec(cfg: &PipelineConfig, t: usize, stage: Stage) -> Result<BasisSpec, PipelineError> {
    BasisSpec::new(cfg.encode.d_pol, cfg.encode.d_fourier, cfg.encode.omega, t).map_err(fail(stage))
}

/// Least-squares Poly-Fourier fit of every refined trajectory.
pub fn run_encode(cfg: &PipelineConfig, layout: &OutputLayout) -> Result<super::StageManifest, PipelineError> {
    const S: Stage = Stage::Encode;
    let paths = DatasetPaths::new(&cfg.dataset);
    let mut mb = ManifestBuilder::new(S, cfg, layout);
    let t = load_cameras(S, &paths, &mut mb)?.len();
    let traj_path = require(S, layout.trajectories())?;
    mb.input(&traj_path)?;
    let trajectories = read_trajectories(&traj_path, t).map_err(fail(S))?;
    let spec = basis_spec(cfg, t, S)?;
    let fitter = TrajectoryFitter::new(spec, cfg.encode.ridge).map_err(fail(S))?;
    let encoded: Vec<EncodedTrack> = trajectories
        .par_iter()
        .map(|tr| {
            let dense = tr
                .dense_positions()
                .ok_or_else(|| invalid(S, format!("trajectory {} has undefined frames", tr.track_id)))?;
            let fit = fitter.fit(&dense).map_err(fail(S))?;
            Ok(EncodedTrack {
                track_id: tr.track_id,
                instance_id: tr.instance_id,
                curve: fit.curve,
                residual_rms: fit.residual_rms,
            })
        })
        .collect::<Result<_, PipelineError>>()?;
    write_coefficients(&layout.coefficients(), &spec, &encoded).map_err(fail(S))?;
    mb.output(&layout.coefficients())?;
    let record = BasisRecord {
        spec,
        ridge: cfg.encode.ridge,
        columns: spec.column_names(),
        condition: fitter.condition(),
    };
    write_json(S, &layout.basis(), &record)?;
    mb.output(&layout.basis())?;
    let worst = encoded
        .iter()
        .flat_map(|e| e.residual_rms)
        .fold(0.0f64, f64::max);
    info!("encode: {} trajectories, worst residual RMS {worst:.3e}", encoded.len());
    mb.finish()
}

/// Static sampling plus one dynamic Gaussian per encoded trajectory.
pub fn run_init(cfg: &PipelineConfig, layout: &OutputLayout) -> Result<super::StageManifest, PipelineError> {
    const S: Stage = Stage::Init;
    let paths = DatasetPaths::new(&cfg.dataset);
    let mut mb = ManifestBuilder::new(S, cfg, layout);
    let cams = load_cameras(S, &paths, &mut mb)?;
    let t = cams.len();
    let images = load_images(S, &paths, t, &mut mb)?;
    let depths = load_depths(S, &paths, t, &mut mb)?;
    let masks = load_track_masks(S, layout, t, &mut mb)?;
    let traj_path = require(S, layout.trajectories())?;
    mb.input(&traj_path)?;
    let trajectories = read_trajectories(&traj_path, t).map_err(fail(S))?;
    let coef_path = require(S, layout.coefficients())?;
    mb.input(&coef_path)?;
    let spec = basis_spec(cfg, t, S)?;
    let encoded = read_coefficients(&coef_path, &spec).map_err(fail(S))?;

    let by_track: BTreeMap<u32, &Trajectory3D> = trajectories.iter().map(|tr| (tr.track_id, tr)).collect();
    let mut matched = Vec::with_capacity(encoded.len());
    let mut curves = Vec::with_capacity(encoded.len());
    for e in encoded {
        let tr = by_track
            .get(&e.track_id)
            .ok_or_else(|| invalid(S, format!("coefficients for unknown track {}", e.track_id)))?;
        matched.push((*tr).clone());
        curves.push(e.curve);
    }
    let params = cfg.init.params(cfg.seed);
    let maps = log_maps(&images, params.sigma);
    let inputs = FrameInputs {
        images: &images,
        masks: &masks,
        depths: &depths,
        cams: &cams,
        log_maps: &maps,
    };
    let mut records = sample_static(&inputs, &params).map_err(fail(S))?;
    let n_static = records.len();
    records.extend(init_dynamic(&matched, &curves, &inputs, &params).map_err(fail(S))?);
    write_gaussians_ply(layout.gaussians(), &records).map_err(fail(S))?;
    mb.output(&layout.gaussians())?;
    info!("init: {n_static} static and {} dynamic Gaussians", records.len() - n_static);
    mb.finish()
}
