//! Scene flow from 2D tracks: instance assignment, depth lifting, per-instance
//! rigid refinement forward and backward in time, and gap interpolation.

mod assign;
mod refine;
mod rigid;

pub use assign::{apply_assignment, assign_tracks, lift_tracks};
pub use refine::{
    interpolate_gaps, reconstruct, refine_backward, refine_forward, InstanceMotion, PairMotion,
    RefineConfig,
};
pub use rigid::{estimate_rigid, kabsch, RigidEstimate};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneFlowError {
    #[error("rigid estimation needs at least 3 correspondences, got {0}")]
    TooFewPoints(usize),
    #[error("source and destination lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("every minimal sample was degenerate (collinear points)")]
    DegenerateConfiguration,
    #[error("trajectory {0} has no visible frame")]
    EmptyTrajectory(u32),
}

/// How a trajectory position came to exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Observed,
    RigidForward,
    RigidBackward,
    Interpolated,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Observed => "observed",
            Provenance::RigidForward => "rigid_forward",
            Provenance::RigidBackward => "rigid_backward",
            Provenance::Interpolated => "interpolated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "observed" => Provenance::Observed,
            "rigid_forward" => Provenance::RigidForward,
            "rigid_backward" => Provenance::RigidBackward,
            "interpolated" => Provenance::Interpolated,
            _ => return None,
        })
    }
}

/// The frame and pixel a track was queried at (its first lifted observation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryPoint {
    pub frame: usize,
    pub x: f64,
    pub y: f64,
}

/// A lifted 3D trajectory. `positions[t]` is `Some` exactly when the point
/// is visible (observed or filled) at frame `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory3D {
    pub track_id: u32,
    /// Owning instance; `0` means unassigned / static.
    pub instance_id: u16,
    pub positions: Vec<Option<Vector3<f64>>>,
    pub provenance: Vec<Option<Provenance>>,
    pub query: Option<QueryPoint>,
}

impl Trajectory3D {
    pub fn new(track_id: u32, frame_count: usize) -> Self {
        Self {
            track_id,
            instance_id: 0,
            positions: vec![None; frame_count],
            provenance: vec![None; frame_count],
            query: None,
        }
    }

    pub fn frame_count(&self) -> usize {
        self.positions.len()
    }

    pub fn is_visible(&self, t: usize) -> bool {
        self.positions[t].is_some()
    }

    pub fn set(&mut self, t: usize, p: Vector3<f64>, how: Provenance) {
        self.positions[t] = Some(p);
        self.provenance[t] = Some(how);
    }

    /// Every frame has a position.
    pub fn is_total(&self) -> bool {
        self.positions.iter().all(Option::is_some)
    }

    /// Positions of a total trajectory; `None` if any frame is missing.
    pub fn dense_positions(&self) -> Option<Vec<Vector3<f64>>> {
        self.positions.iter().copied().collect()
    }
}

/// SplitMix64 finalizer, used to derive independent per-task seeds.
pub(crate) fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
