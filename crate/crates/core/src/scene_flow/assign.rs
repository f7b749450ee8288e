use std::collections::BTreeMap;

use nalgebra::Vector2;

use crate::geometry::CameraFrame;
use crate::io::{DepthMap, InstanceMaskFrame, TrackTable};

use super::{Provenance, QueryPoint, Trajectory3D};

/// Majority vote of each track's visible observations over the instance
/// labels. Ties go to the smaller nonzero ID; the background (`0`) wins only
/// with a strict majority count over every instance.
pub fn assign_tracks(tracks: &TrackTable, masks: &[InstanceMaskFrame]) -> BTreeMap<u32, u16> {
    let mut out = BTreeMap::new();
    for (track_id, obs) in tracks.by_track() {
        let mut votes: BTreeMap<u16, usize> = BTreeMap::new();
        for o in obs.iter().filter(|o| o.visible) {
            let Some(frame) = masks.get(o.frame) else {
                continue;
            };
            if let Some((x, y)) = frame.ids.nearest_pixel(o.x, o.y) {
                *votes.entry(*frame.ids.get(x, y)).or_default() += 1;
            }
        }
        let background = votes.get(&0).copied().unwrap_or(0);
        let best = votes
            .iter()
            .filter(|(id, _)| **id != 0)
            .fold(None, |acc: Option<(u16, usize)>, (&id, &n)| match acc {
                Some((_, m)) if m >= n => acc,
                _ => Some((id, n)),
            });
        let id = match best {
            Some((id, n)) if n >= background => id,
            _ => 0,
        };
        out.insert(track_id, id);
    }
    out
}

/// Lifts every track to 3D with the depth at its nearest pixel. Observations
/// over depth holes, outside the image, or on frames without a camera become
/// invisible. The query point is the first lifted observation.
pub fn lift_tracks(
    tracks: &TrackTable,
    depths: &[DepthMap],
    cams: &[CameraFrame],
) -> Vec<Trajectory3D> {
    let frame_count = cams.len();
    tracks
        .by_track()
        .into_iter()
        .map(|(track_id, obs)| {
            let mut traj = Trajectory3D::new(track_id, frame_count);
            for o in obs.iter().filter(|o| o.visible && o.frame < frame_count) {
                let Some(depth) = depths.get(o.frame).and_then(|d| d.sample(o.x, o.y)) else {
                    continue;
                };
                if let Ok(p) = cams[o.frame].unproject(&Vector2::new(o.x, o.y), depth) {
                    traj.set(o.frame, p, Provenance::Observed);
                    if traj.query.is_none_or(|q| o.frame < q.frame) {
                        traj.query = Some(QueryPoint {
                            frame: o.frame,
                            x: o.x,
                            y: o.y,
                        });
                    }
                }
            }
            traj
        })
        .collect()
}

/// Sets instance IDs from an assignment and drops background and
/// never-visible trajectories.
pub fn apply_assignment(
    trajectories: Vec<Trajectory3D>,
    assignment: &BTreeMap<u32, u16>,
) -> Vec<Trajectory3D> {
    trajectories
        .into_iter()
        .filter_map(|mut t| {
            let id = assignment.get(&t.track_id).copied().unwrap_or(0);
            if id == 0 || t.query.is_none() {
                return None;
            }
            t.instance_id = id;
            Some(t)
        })
        .collect()
}
