use std::collections::BTreeMap;

use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::geometry::RigidTransform;
use crate::io::{DepthMap, FlowField, InstanceMaskFrame, TrackObservation, TrackTable};
use crate::raster::{Raster, RgbImage};

use super::{Owner, Scene, SyntheticError};

/// Everything observable at one frame, plus the z-buffer winners.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub image: RgbImage,
    pub depth: DepthMap,
    pub masks: InstanceMaskFrame,
    /// Index of the point that won each pixel.
    pub winner: Raster<Option<u32>>,
    /// Full-precision camera depth of each winner (`0` on empty pixels).
    pub exact_depth: Raster<f64>,
}

/// Splats every point into its nearest pixel; the smallest camera depth
/// wins, ties go to the lower point index. Empty pixels are black with
/// missing depth and label 0.
pub fn render_frame(scene: &Scene, frame: usize) -> RenderedFrame {
    let cam = &scene.cameras[frame];
    let (w, h) = (cam.width, cam.height);
    let mut winner: Raster<Option<u32>> = Raster::filled(w, h, None);
    let mut zbuf = Raster::filled(w, h, f64::INFINITY);
    for i in 0..scene.points.len() {
        let Ok((px, z)) = cam.project(&scene.position(i, frame)) else {
            continue;
        };
        let Some((x, y)) = zbuf.nearest_pixel(px.x, px.y) else {
            continue;
        };
        if z < *zbuf.get(x, y) {
            *zbuf.get_mut(x, y) = z;
            *winner.get_mut(x, y) = Some(i as u32);
        }
    }
    let mut image = Raster::filled(w, h, [0.0f32; 3]);
    let mut depth = Raster::filled(w, h, 0.0f32);
    let mut exact_depth = Raster::filled(w, h, 0.0);
    let mut masks = InstanceMaskFrame::empty(frame, w, h);
    for k in 0..w * h {
        if let Some(i) = winner.data[k] {
            let p = &scene.points[i as usize];
            image.data[k] = p.color;
            depth.data[k] = zbuf.data[k] as f32;
            exact_depth.data[k] = zbuf.data[k];
            let id = scene.instance_of(p.owner);
            masks.ids.data[k] = id;
            if id != 0 {
                masks.confidence.insert(id, 1.0);
            }
        }
    }
    RenderedFrame {
        image,
        depth: DepthMap { frame_index: frame, depth },
        masks,
        winner,
        exact_depth,
    }
}

/// Exact flow from `frame` to `frame + 1`. Each covered pixel centre is
/// lifted with its winner's depth, moved with the winner's owner and
/// reprojected. Empty pixels look at infinity and follow the camera
/// rotation only.
pub fn render_flow(scene: &Scene, frame: usize, rendered: &RenderedFrame) -> Result<FlowField, SyntheticError> {
    let (a, b) = (&scene.cameras[frame], &scene.cameras[frame + 1]);
    let (w, h) = (a.width, a.height);
    let infinity = b.k * b.r * a.r.transpose() * a.k_inverse();
    let mut flow = Raster::filled(w, h, [0.0f32; 2]);
    for y in 0..h {
        for x in 0..w {
            let centre = Vector2::new(x as f64, y as f64);
            let target = match *rendered.winner.get(x, y) {
                Some(i) => {
                    let owner = scene.points[i as usize].owner;
                    let p = a.unproject(&centre, *rendered.exact_depth.get(x, y))?;
                    let moved = scene.step(owner, frame).apply(&p);
                    match b.project(&moved) {
                        Ok((q, _)) => q,
                        Err(_) => centre,
                    }
                }
                None => {
                    let q = infinity * Vector3::new(centre.x, centre.y, 1.0);
                    Vector2::new(q.x / q.z, q.y / q.z)
                }
            };
            *flow.get_mut(x, y) = [(target.x - centre.x) as f32, (target.y - centre.y) as f32];
        }
    }
    Ok(FlowField::new(flow)?)
}

/// Sampled object points and their per-frame observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTracks {
    pub table: TrackTable,
    /// `point_of[track_id]` is the scene point the track follows.
    pub point_of: Vec<u32>,
}

/// Samples up to `n_tracks` object points that win their pixel in at least
/// one frame. A track is visible exactly on the frames its point wins.
/// Only visible observations are emitted.
pub fn render_tracks(scene: &Scene, renders: &[RenderedFrame], n_tracks: usize, seed: u64) -> SampledTracks {
    let mut seen = vec![false; scene.points.len()];
    for r in renders {
        for i in r.winner.data.iter().flatten() {
            seen[*i as usize] = true;
        }
    }
    let candidates: Vec<u32> = (0..scene.points.len())
        .filter(|&i| seen[i] && scene.points[i].owner != Owner::Background)
        .map(|i| i as u32)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<u32> = if candidates.len() <= n_tracks {
        candidates
    } else {
        rand::seq::index::sample(&mut rng, candidates.len(), n_tracks)
            .into_iter()
            .map(|k| candidates[k])
            .collect()
    };
    chosen.sort_unstable();
    let observations: Vec<Vec<TrackObservation>> = chosen
        .par_iter()
        .enumerate()
        .map(|(track, &i)| {
            let mut obs = Vec::new();
            for (frame, r) in renders.iter().enumerate() {
                let cam = &scene.cameras[frame];
                let Ok((px, _)) = cam.project(&scene.position(i as usize, frame)) else {
                    continue;
                };
                let wins = r
                    .winner
                    .nearest_pixel(px.x, px.y)
                    .is_some_and(|(x, y)| *r.winner.get(x, y) == Some(i));
                if wins {
                    obs.push(TrackObservation {
                        track_id: track as u32,
                        frame,
                        x: px.x,
                        y: px.y,
                        visible: true,
                    });
                }
            }
            obs
        })
        .collect();
    let table = TrackTable {
        width: scene.spec.width,
        height: scene.spec.height,
        observations: observations.into_iter().flatten().collect(),
    };
    SampledTracks { table, point_of: chosen }
}

/// Exact answers for every tracked point and instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Track ID to (instance ID, position per frame).
    pub trajectories: BTreeMap<u32, (u16, Vec<Vector3<f64>>)>,
    /// Instance ID to per-pair motion `frame -> frame + 1`.
    pub motions: BTreeMap<u16, Vec<RigidTransform>>,
}

pub fn ground_truth(scene: &Scene, tracks: &SampledTracks) -> GroundTruth {
    let frames = scene.frame_count();
    let trajectories = tracks
        .point_of
        .iter()
        .enumerate()
        .map(|(track, &i)| {
            let owner = scene.points[i as usize].owner;
            let path = (0..frames).map(|f| scene.position(i as usize, f)).collect();
            (track as u32, (scene.instance_of(owner), path))
        })
        .collect();
    let motions = (0..scene.spec.objects.len())
        .map(|k| {
            let steps = (0..frames.saturating_sub(1)).map(|f| scene.step(Owner::Object(k), f)).collect();
            (scene.spec.objects[k].instance_id, steps)
        })
        .collect();
    GroundTruth { trajectories, motions }
}

#[cfg(test)]
mod tests {
    use super::super::{demo_scene, Background, CameraPath, ColoredPoint, MotionScript, ObjectSpec, SceneSpec, Shape};
    use super::*;
    use crate::encoding::{BasisSpec, TrajectoryFitter};

    fn tiny(points: Vec<ColoredPoint>, background: Background, camera_end: [f64; 3]) -> SceneSpec {
        SceneSpec {
            frame_count: 2,
            width: 9,
            height: 9,
            focal: 10.0,
            camera: CameraPath { start: [0.0; 3], end: camera_end, yaw: 0.0 },
            background,
            objects: if points.is_empty() {
                vec![]
            } else {
                vec![ObjectSpec { instance_id: 3, shape: Shape::Points { points }, motion: MotionScript::still() }]
            },
            seed: 0,
        }
    }

    #[test]
    fn single_point_at_centre() {
        let pt = ColoredPoint { position: [0.0, 0.0, 2.5], color: [1.0, 0.5, 0.25] };
        let scene = tiny(vec![pt], Background::Empty, [0.0; 3]).build().unwrap();
        let r = render_frame(&scene, 0);
        assert_eq!(r.image.get(4, 4), &[1.0, 0.5, 0.25]);
        assert_eq!(*r.depth.depth.get(4, 4), 2.5);
        assert_eq!(*r.masks.ids.get(4, 4), 3);
        assert_eq!(r.winner.data.iter().flatten().count(), 1);
    }

    #[test]
    fn nearer_point_wins() {
        let far = ColoredPoint { position: [0.0, 0.0, 4.0], color: [0.0, 1.0, 0.0] };
        let near = ColoredPoint { position: [0.0, 0.0, 2.0], color: [1.0, 0.0, 0.0] };
        let scene = tiny(vec![far, near], Background::Empty, [0.0; 3]).build().unwrap();
        let r = render_frame(&scene, 0);
        assert_eq!(*r.depth.depth.get(4, 4), 2.0);
        assert_eq!(r.image.get(4, 4), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_scene_is_background() {
        let scene = tiny(vec![], Background::Empty, [0.0; 3]).build().unwrap();
        let r = render_frame(&scene, 0);
        assert!(r.depth.depth.data.iter().all(|d| *d == 0.0));
        assert!(r.masks.ids.data.iter().all(|d| *d == 0));
        assert!(r.masks.confidence.is_empty());
    }

    #[test]
    fn static_scene_static_camera_has_zero_flow() {
        let wall = Background::Wall { depth: 3.0, half_extent: 2.0, spacing: 0.05 };
        let scene = tiny(vec![], wall, [0.0; 3]).build().unwrap();
        let r = render_frame(&scene, 0);
        let f = render_flow(&scene, 0, &r).unwrap();
        assert!(f.flow.data.iter().all(|v| v[0].abs() < 1e-6 && v[1].abs() < 1e-6));
    }

    #[test]
    fn sideways_camera_over_plane_gives_parallax_flow() {
        let wall = Background::Wall { depth: 4.0, half_extent: 3.0, spacing: 0.05 };
        let dx = 0.2;
        let scene = tiny(vec![], wall, [dx, 0.0, 0.0]).build().unwrap();
        let r = render_frame(&scene, 0);
        let f = render_flow(&scene, 0, &r).unwrap();
        let expected = -10.0 * dx / 4.0;
        for v in &f.flow.data {
            assert!((v[0] as f64 - expected).abs() < 1e-6 && v[1].abs() < 1e-6, "{v:?}");
        }
    }

    #[test]
    fn demo_tracks_lift_to_ground_truth() {
        let scene = demo_scene(8, 1).build().unwrap();
        let renders: Vec<_> = (0..8).map(|f| render_frame(&scene, f)).collect();
        let tracks = render_tracks(&scene, &renders, 300, 2);
        let gt = ground_truth(&scene, &tracks);
        assert_eq!(tracks.point_of.len(), 300);
        for o in &tracks.table.observations {
            let d = renders[o.frame].depth.sample(o.x, o.y).unwrap();
            let p = scene.cameras[o.frame].unproject(&Vector2::new(o.x, o.y), d).unwrap();
            let truth = gt.trajectories[&o.track_id].1[o.frame];
            assert!((p - truth).norm() < 1e-5, "{}", (p - truth).norm());
        }
        // Per-pair motions chain to the trajectories exactly.
        for (instance, path) in gt.trajectories.values() {
            let steps = &gt.motions[instance];
            for t in 0..7 {
                assert!((steps[t].apply(&path[t]) - path[t + 1]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn demo_trajectories_lie_in_the_basis_span() {
        let scene = demo_scene(40, 1).build().unwrap();
        let fitter = TrajectoryFitter::new(BasisSpec::new(1, 3, std::f64::consts::TAU, 40).unwrap(), 0.0).unwrap();
        for i in [0usize, 20_000, 50_000, scene.points.len() - 1] {
            let path: Vec<_> = (0..40).map(|f| scene.position(i, f)).collect();
            let fit = fitter.fit(&path).unwrap();
            assert!(fit.residual_rms.iter().all(|r| *r < 1e-10), "{:?}", fit.residual_rms);
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = demo_scene(10, 4);
        let json = serde_json::to_string(&spec).unwrap();
        let back: SceneSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }
}
