use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeometryError, ROTATION_TOL};

/// Proper rotation check: `‖RᵀR − I‖∞ < 1e-9` and `det R = 1 ± 1e-9`.
pub fn is_rotation(r: &Matrix3<f64>) -> bool {
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    err < ROTATION_TOL && (r.determinant() - 1.0).abs() < ROTATION_TOL
}

/// Cross-product matrix `[v]×`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation angle of `r` in radians.
///
/// Uses `atan2(sin, cos)` from the skew and trace parts so that angles near
/// zero keep full relative precision (the plain `acos` of the trace loses
/// half the digits there).
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let s = 0.5
        * Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm();
    let c = 0.5 * (r.trace() - 1.0);
    s.atan2(c)
}

/// Rigid motion `p ↦ R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if !is_rotation(&rotation) {
            return Err(GeometryError::NonOrthonormalMatrix);
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Geodesic rotation distance and translation distance to `other`.
    pub fn distance(&self, other: &Self) -> (f64, f64) {
        (
            rotation_angle(&(self.rotation.transpose() * other.rotation)),
            (self.translation - other.translation).norm(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    #[test]
    fn small_angles_keep_precision() {
        let r = Rotation3::from_axis_angle(&Vector3::z_axis(), 1e-11);
        let a = rotation_angle(r.matrix());
        assert!((a - 1e-11).abs() < 1e-20);
        let r = Rotation3::from_axis_angle(&Vector3::x_axis(), 3.0);
        assert!((rotation_angle(r.matrix()) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_composes_to_identity() {
        let t = RigidTransform::new(
            *Rotation3::from_euler_angles(0.3, -0.2, 1.1).matrix(),
            Vector3::new(1.0, -2.0, 0.5),
        )
        .unwrap();
        let id = t.compose(&t.inverse());
        let (ra, ta) = id.distance(&RigidTransform::identity());
        assert!(ra < 1e-14 && ta < 1e-14);
    }

    #[test]
    fn rejects_reflection() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert_eq!(
            RigidTransform::new(m, Vector3::zeros()),
            Err(GeometryError::NonOrthonormalMatrix)
        );
    }
}
