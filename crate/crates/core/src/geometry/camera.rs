use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{is_rotation, skew, GeometryError};

/// Pinhole camera for one frame: intrinsics `K` and world→camera `[R | t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraFrame {
    pub frame_index: usize,
    pub k: Matrix3<f64>,
    pub r: Matrix3<f64>,
    pub t: Vector3<f64>,
    pub width: usize,
    pub height: usize,
}

impl CameraFrame {
    /// Validates `R` (orthonormal, det +1) and `K` (upper triangular,
    /// `K[2][2] = 1`, positive focal lengths).
    pub fn new(
        frame_index: usize,
        k: Matrix3<f64>,
        r: Matrix3<f64>,
        t: Vector3<f64>,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        if !is_rotation(&r) {
            return Err(GeometryError::InvalidCamera(format!(
                "frame {frame_index}: R is not a proper rotation"
            )));
        }
        let upper = k[(1, 0)] == 0.0 && k[(2, 0)] == 0.0 && k[(2, 1)] == 0.0;
        if !upper || k[(2, 2)] != 1.0 || k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 {
            return Err(GeometryError::InvalidCamera(format!(
                "frame {frame_index}: K must be upper triangular with K[2][2] = 1 and positive focals"
            )));
        }
        if !k.iter().chain(t.iter()).all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidCamera(format!(
                "frame {frame_index}: non-finite entries"
            )));
        }
        Ok(Self {
            frame_index,
            k,
            r,
            t,
            width,
            height,
        })
    }

    /// `K = [[f, 0, cx], [0, f, cy], [0, 0, 1]]`.
    pub fn intrinsics(fx: f64, fy: f64, cx: f64, cy: f64) -> Matrix3<f64> {
        Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0)
    }

    pub fn fx(&self) -> f64 {
        self.k[(0, 0)]
    }

    /// Camera centre in world coordinates, `−Rᵀ t`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.r.transpose() * self.t)
    }

    pub fn to_camera(&self, p_world: &Vector3<f64>) -> Vector3<f64> {
        self.r * p_world + self.t
    }

    /// Projects a world point to `(pixel, camera-space depth)`.
    pub fn project(&self, p_world: &Vector3<f64>) -> Result<(Vector2<f64>, f64), GeometryError> {
        let pc = self.to_camera(p_world);
        if pc.z <= 1e-12 {
            return Err(GeometryError::PointBehindCamera(pc.z));
        }
        let h = self.k * pc;
        Ok((Vector2::new(h.x / h.z, h.y / h.z), pc.z))
    }

    /// World point at camera-space depth `depth` along the ray through `pixel`.
    pub fn unproject(&self, pixel: &Vector2<f64>, depth: f64) -> Result<Vector3<f64>, GeometryError> {
        if !(depth > 0.0) {
            return Err(GeometryError::NonPositiveDepth(depth));
        }
        let k = &self.k;
        // Back-substitution through the upper-triangular K.
        let y = (pixel.y - k[(1, 2)]) / k[(1, 1)];
        let x = (pixel.x - k[(0, 2)] - k[(0, 1)] * y) / k[(0, 0)];
        let pc = Vector3::new(x * depth, y * depth, depth);
        Ok(self.r.transpose() * (pc - self.t))
    }

    /// `K⁻¹` for the upper-triangular intrinsic matrix.
    pub fn k_inverse(&self) -> Matrix3<f64> {
        let k = &self.k;
        let (fx, s, cx, fy, cy) = (k[(0, 0)], k[(0, 1)], k[(0, 2)], k[(1, 1)], k[(1, 2)]);
        Matrix3::new(
            1.0 / fx,
            -s / (fx * fy),
            (s * cy - cx * fy) / (fx * fy),
            0.0,
            1.0 / fy,
            -cy / fy,
            0.0,
            0.0,
            1.0,
        )
    }
}

/// Fundamental matrix mapping pixels of `cam_a` to epipolar lines in `cam_b`
/// (`x_bᵀ F x_a = 0`), normalized to unit Frobenius norm.
pub fn fundamental_matrix(
    cam_a: &CameraFrame,
    cam_b: &CameraFrame,
) -> Result<Matrix3<f64>, GeometryError> {
    let baseline = (cam_a.center() - cam_b.center()).norm();
    if baseline <= 1e-9 {
        return Err(GeometryError::DegenerateBaseline(baseline));
    }
    let r_rel = cam_b.r * cam_a.r.transpose();
    let t_rel = cam_b.t - r_rel * cam_a.t;
    let essential = skew(&t_rel) * r_rel;
    let f = cam_b.k_inverse().transpose() * essential * cam_a.k_inverse();
    Ok(f / f.norm())
}
