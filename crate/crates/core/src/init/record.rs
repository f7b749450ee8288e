use nalgebra::Vector3;

use crate::encoding::DeformationParams;
use crate::geometry::Quaternion;

/// Motion attached to a dynamic Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicMotion {
    /// Owning instance, always `>= 1`.
    pub instance_id: u16,
    /// Source trajectory, kept so outputs can be traced back to tracks.
    pub track_id: u32,
    pub deformation: DeformationParams,
}

/// One initial Gaussian. Dynamic records keep `position` and `rotation`
/// equal to the deformation's canonical `μ₀` and `q₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianRecord {
    pub position: Vector3<f64>,
    pub rotation: Quaternion,
    /// Per-axis scale in scene units (positive).
    pub scale: Vector3<f64>,
    pub opacity: f64,
    pub color: [f64; 3],
    pub motion: Option<DynamicMotion>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaussianKind {
    Static,
    Dynamic,
}

impl GaussianRecord {
    pub fn new_static(position: Vector3<f64>, scale: f64, opacity: f64, color: [f64; 3]) -> Self {
        Self {
            position,
            rotation: Quaternion::identity(),
            scale: Vector3::repeat(scale),
            opacity,
            color,
            motion: None,
        }
    }

    pub fn new_dynamic(
        deformation: DeformationParams,
        instance_id: u16,
        track_id: u32,
        scale: f64,
        opacity: f64,
        color: [f64; 3],
    ) -> Self {
        Self {
            position: deformation.mu0(),
            rotation: deformation.q0,
            scale: Vector3::repeat(scale),
            opacity,
            color,
            motion: Some(DynamicMotion {
                instance_id,
                track_id,
                deformation,
            }),
        }
    }

    pub fn kind(&self) -> GaussianKind {
        if self.motion.is_some() {
            GaussianKind::Dynamic
        } else {
            GaussianKind::Static
        }
    }

    pub fn instance_id(&self) -> Option<u16> {
        self.motion.as_ref().map(|m| m.instance_id)
    }

    /// Position at normalized time `tau`; static records do not move.
    pub fn position_at(&self, tau: f64) -> Vector3<f64> {
        match &self.motion {
            Some(m) => m.deformation.eval_position(tau),
            None => self.position,
        }
    }
}
