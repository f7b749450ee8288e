use nalgebra::{DMatrix, DVector, Matrix4, Vector3, Vector4};

use crate::geometry::Quaternion;

use super::{BasisSpec, EncodingError, PolyFourierCurve};

/// Below this norm `r(τ) + 1` cannot be normalized into a rotation.
pub const DEGENERATE_ROTATION_NORM: f64 = 1e-9;

/// Time-dependent deformation of a dynamic Gaussian.
///
/// Position: `μ(τ) = μ₀ + Δμ(τ)`, where `μ₀` is the constant column of
/// `position` and `Δμ` sums the remaining polynomial and harmonic columns.
///
/// Rotation: `q(τ) = normalize(r(τ) + 1) ⊗ q₀`, where `r(τ)` is the 4-vector
/// `(w, x, y, z)` produced by the `rotation` coefficients over the
/// non-constant basis columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationParams {
    pub position: PolyFourierCurve,
    /// `4 × (dim − 1)` coefficients over the non-constant basis columns.
    pub rotation: DMatrix<f64>,
    pub q0: Quaternion,
}

impl DeformationParams {
    /// Position from a fitted curve, rotation deformation zero, `q₀` identity.
    pub fn from_position_curve(position: PolyFourierCurve) -> Self {
        let cols = position.spec.dim() - 1;
        Self {
            rotation: DMatrix::zeros(4, cols),
            position,
            q0: Quaternion::identity(),
        }
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.position.spec
    }

    /// Canonical mean `μ₀`.
    pub fn mu0(&self) -> Vector3<f64> {
        let c = &self.position.coefficients;
        Vector3::new(c[(0, 0)], c[(1, 0)], c[(2, 0)])
    }

    pub fn eval_position(&self, tau: f64) -> Vector3<f64> {
        self.position.evaluate3(tau)
    }

    /// `Δμ(τ)`, the offset from `μ₀`.
    pub fn position_offset(&self, tau: f64) -> Vector3<f64> {
        self.eval_position(tau) - self.mu0()
    }

    fn deformation_row(&self, tau: f64) -> DVector<f64> {
        let full = self.spec().basis_row(tau);
        full.rows(1, full.len() - 1).into_owned()
    }

    /// Unnormalized `v(τ) = r(τ) + (1, 0, 0, 0)`.
    fn rotation_raw(&self, tau: f64) -> Vector4<f64> {
        let r = &self.rotation * self.deformation_row(tau);
        Vector4::new(r[0] + 1.0, r[1], r[2], r[3])
    }

    /// `Δq(τ) ⊗ q₀`.
    pub fn eval_rotation(&self, tau: f64) -> Result<Quaternion, EncodingError> {
        let v = self.rotation_raw(tau);
        let n = v.norm();
        if n < DEGENERATE_ROTATION_NORM {
            return Err(EncodingError::DegenerateRotation(n));
        }
        let dq = Quaternion::from_vector(&(v / n));
        Ok(dq.multiply(&self.q0))
    }

    /// Position coefficients flattened axis-major (`x` block, `y`, `z`).
    pub fn position_vector(&self) -> DVector<f64> {
        let c = &self.position.coefficients;
        DVector::from_iterator(c.len(), (0..3).flat_map(|r| c.row(r).iter().copied().collect::<Vec<_>>()))
    }

    pub fn set_position_vector(&mut self, v: &DVector<f64>) {
        let dim = self.spec().dim();
        for r in 0..3 {
            for j in 0..dim {
                self.position.coefficients[(r, j)] = v[r * dim + j];
            }
        }
    }

    /// Rotation coefficients flattened component-major (`w`, `x`, `y`, `z`).
    pub fn rotation_vector(&self) -> DVector<f64> {
        let c = &self.rotation;
        DVector::from_iterator(c.len(), (0..4).flat_map(|r| c.row(r).iter().copied().collect::<Vec<_>>()))
    }

    pub fn set_rotation_vector(&mut self, v: &DVector<f64>) {
        let cols = self.rotation.ncols();
        for r in 0..4 {
            for j in 0..cols {
                self.rotation[(r, j)] = v[r * cols + j];
            }
        }
    }

    /// `∂μ(τ)/∂(position_vector)`: `3 × 3·dim`, block diagonal with `φ(τ)`.
    pub fn jacobian_position(&self, tau: f64) -> DMatrix<f64> {
        let row = self.spec().basis_row(tau);
        let dim = row.len();
        let mut j = DMatrix::zeros(3, 3 * dim);
        for axis in 0..3 {
            j.view_mut((axis, axis * dim), (1, dim)).copy_from(&row.transpose());
        }
        j
    }

    /// `∂q(τ)/∂(rotation_vector)`: `4 × 4·(dim − 1)`.
    ///
    /// Chain: block-diagonal basis rows → normalization Jacobian
    /// `(I − uuᵀ)/‖v‖` → right multiplication by `q₀`.
    pub fn jacobian_rotation(&self, tau: f64) -> Result<DMatrix<f64>, EncodingError> {
        let v = self.rotation_raw(tau);
        let n = v.norm();
        if n < DEGENERATE_ROTATION_NORM {
            return Err(EncodingError::DegenerateRotation(n));
        }
        let u = v / n;
        let normalize = (Matrix4::identity() - u * u.transpose()) / n;
        let outer = self.q0.right_multiplication_matrix() * normalize;
        let row = self.deformation_row(tau);
        let cols = row.len();
        let mut j = DMatrix::zeros(4, 4 * cols);
        for c in 0..4 {
            // ∂v_c/∂rotation[c, k] = row[k]; column block c scales outer[:, c].
            for k in 0..cols {
                for r in 0..4 {
                    j[(r, c * cols + k)] = outer[(r, c)] * row[k];
                }
            }
        }
        Ok(j)
    }
}
