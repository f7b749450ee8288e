use std::collections::BTreeMap;

use log::warn;
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::RigidTransform;

use super::{estimate_rigid, mix_seed, Provenance, SceneFlowError, Trajectory3D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub max_iters: usize,
    /// Inlier tolerance as a fraction of the source points' bounding-box diagonal.
    pub inlier_tol_fraction: f64,
    pub seed: u64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_iters: 256,
            inlier_tol_fraction: 0.02,
            seed: 0,
        }
    }
}

/// Motion of one instance between frames `t` and `t + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMotion {
    pub transform: RigidTransform,
    pub support: usize,
    pub inliers: usize,
    /// `true` when support was too low and the transform was carried over.
    pub carried: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMotion {
    pub instance_id: u16,
    pub pairs: Vec<PairMotion>,
}

fn bbox_diagonal(points: &[Vector3<f64>]) -> f64 {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    if points.is_empty() {
        0.0
    } else {
        (hi - lo).norm()
    }
}

/// Estimates per-pair rigid motion from co-visible points and pushes every
/// visible point into the next frame where it is missing.
pub fn refine_forward(
    trajectories: &mut [Trajectory3D],
    instance_id: u16,
    config: &RefineConfig,
) -> InstanceMotion {
    let frame_count = trajectories.first().map_or(0, |t| t.frame_count());
    let mut pairs = Vec::with_capacity(frame_count.saturating_sub(1));
    let mut previous = RigidTransform::identity();
    for t in 0..frame_count.saturating_sub(1) {
        let (src, dst): (Vec<_>, Vec<_>) = trajectories
            .iter()
            .filter_map(|tr| Some((tr.positions[t]?, tr.positions[t + 1]?)))
            .unzip();
        let tol = (config.inlier_tol_fraction * bbox_diagonal(&src)).max(1e-12);
        let seed = mix_seed(config.seed, ((instance_id as u64) << 32) | t as u64);
        let pair = match estimate_rigid(&src, &dst, tol, config.max_iters, seed) {
            Ok(est) => PairMotion {
                transform: est.transform,
                support: src.len(),
                inliers: est.inliers.len(),
                carried: false,
            },
            Err(e) => {
                warn!("instance {instance_id}, frames {t}->{}: {e}; carrying previous motion", t + 1);
                PairMotion {
                    transform: previous.clone(),
                    support: src.len(),
                    inliers: 0,
                    carried: true,
                }
            }
        };
        previous = pair.transform.clone();
        for tr in trajectories.iter_mut() {
            if let (Some(p), None) = (tr.positions[t], tr.positions[t + 1]) {
                tr.set(t + 1, pair.transform.apply(&p), Provenance::RigidForward);
            }
        }
        pairs.push(pair);
    }
    InstanceMotion { instance_id, pairs }
}

/// Fills frames before a point's first visibility with the inverted
/// per-pair motions, walking from the last pair to the first. Carried pairs
/// take the nearest estimated motion later in time (identity if none).
pub fn refine_backward(trajectories: &mut [Trajectory3D], motion: &InstanceMotion) {
    let mut later = RigidTransform::identity();
    for t in (0..motion.pairs.len()).rev() {
        let pair = &motion.pairs[t];
        if !pair.carried {
            later = pair.transform.clone();
        }
        let inverse = later.inverse();
        for tr in trajectories.iter_mut() {
            if let (None, Some(p)) = (tr.positions[t], tr.positions[t + 1]) {
                tr.set(t, inverse.apply(&p), Provenance::RigidBackward);
            }
        }
    }
}

/// Linear interpolation across interior gaps, constant extension at the ends.
pub fn interpolate_gaps(trajectory: &mut Trajectory3D) -> Result<(), SceneFlowError> {
    let known: Vec<usize> = (0..trajectory.frame_count())
        .filter(|&t| trajectory.is_visible(t))
        .collect();
    let (&first, &last) = match (known.first(), known.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(SceneFlowError::EmptyTrajectory(trajectory.track_id)),
    };
    let at = |tr: &Trajectory3D, t: usize| tr.positions[t].expect("known frame");
    for t in 0..first {
        let p = at(trajectory, first);
        trajectory.set(t, p, Provenance::Interpolated);
    }
    for t in last + 1..trajectory.frame_count() {
        let p = at(trajectory, last);
        trajectory.set(t, p, Provenance::Interpolated);
    }
    for w in known.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (pa, pb) = (at(trajectory, a), at(trajectory, b));
        for t in a + 1..b {
            let s = (t - a) as f64 / (b - a) as f64;
            trajectory.set(t, pa + (pb - pa) * s, Provenance::Interpolated);
        }
    }
    Ok(())
}

/// Forward and backward refinement followed by gap interpolation, one worker
/// per instance. Output trajectories are sorted by track ID and motions by
/// instance ID.
pub fn reconstruct(
    trajectories: Vec<Trajectory3D>,
    config: &RefineConfig,
) -> Result<(Vec<Trajectory3D>, Vec<InstanceMotion>), SceneFlowError> {
    let mut groups: BTreeMap<u16, Vec<Trajectory3D>> = BTreeMap::new();
    for t in trajectories {
        groups.entry(t.instance_id).or_default().push(t);
    }
    let results: Vec<Result<(Vec<Trajectory3D>, InstanceMotion), SceneFlowError>> = groups
        .into_par_iter()
        .map(|(id, mut group)| {
            let motion = refine_forward(&mut group, id, config);
            refine_backward(&mut group, &motion);
            for tr in group.iter_mut() {
                interpolate_gaps(tr)?;
            }
            Ok((group, motion))
        })
        .collect();
    let mut all = Vec::new();
    let mut motions = Vec::new();
    for r in results {
        let (g, m) = r?;
        all.extend(g);
        motions.push(m);
    }
    all.sort_by_key(|t| t.track_id);
    Ok((all, motions))
}
