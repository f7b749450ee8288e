//! Camera models, rigid-body math, quaternions and two-view epipolar geometry.
//!
//! Conventions used everywhere in the crate:
//! - extrinsics map world to camera: `p_cam = R p_world + t`;
//! - quaternions are Hamilton products stored as `(w, x, y, z)`;
//! - pixel `(i, j)` is centred on continuous coordinates `(i, j)`.

mod camera;
mod quaternion;
mod rigid;

pub use camera::{fundamental_matrix, CameraFrame};
pub use quaternion::Quaternion;
pub use rigid::{is_rotation, rotation_angle, skew, RigidTransform};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point lies behind the camera (camera-space z = {0})")]
    PointBehindCamera(f64),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("camera centres coincide (baseline {0:e}); epipolar geometry undefined")]
    DegenerateBaseline(f64),
    #[error("quaternion norm {0} is not 1")]
    NonUnitQuaternion(f64),
    #[error("matrix is not a proper rotation")]
    NonOrthonormalMatrix,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
}

/// Tolerance used for orthonormality and unit-norm checks.
pub const ROTATION_TOL: f64 = 1e-9;
