use nalgebra::{DMatrix, Vector3};

use super::{BasisSpec, EncodingError, PolyFourierCurve};

/// Condition number above which an unregularized fit is refused.
pub const MAX_CONDITION: f64 = 1e12;

/// Least-squares solver for `A x = y` shared by every trajectory of one
/// sequence.
///
/// The (ridge-filtered) pseudo-inverse is built once from the SVD of the
/// design matrix, so batch fitting costs one small matrix product per
/// trajectory. Normal equations are never formed.
#[derive(Debug, Clone)]
pub struct TrajectoryFitter {
    spec: BasisSpec,
    design: DMatrix<f64>,
    /// `dim × T` solve operator.
    solve: DMatrix<f64>,
    condition: f64,
}

/// Fitted curve plus per-axis residual RMS.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub curve: PolyFourierCurve,
    pub residual_rms: [f64; 3],
}

impl TrajectoryFitter {
    pub fn new(spec: BasisSpec, ridge: f64) -> Result<Self, EncodingError> {
        if !(ridge >= 0.0) || !ridge.is_finite() {
            return Err(EncodingError::InvalidSpec(format!(
                "ridge weight must be finite and non-negative, got {ridge}"
            )));
        }
        let (samples, unknowns) = (spec.frame_count, spec.dim());
        if ridge == 0.0 && samples < unknowns {
            return Err(EncodingError::UnderdeterminedSystem { samples, unknowns });
        }
        let design = spec.design_matrix();
        let svd = design.clone().svd(true, true);
        let sv = &svd.singular_values;
        let max = sv.max();
        let min = sv.min();
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if ridge == 0.0 && condition > MAX_CONDITION {
            return Err(EncodingError::IllConditioned(condition));
        }
        let u = svd.u.expect("requested U");
        let v_t = svd.v_t.expect("requested Vᵀ");
        let filter: Vec<f64> = sv
            .iter()
            .map(|&s| if s > 0.0 { s / (s * s + ridge) } else { 0.0 })
            .collect();
        let mut scaled_ut = u.transpose();
        for (i, f) in filter.iter().enumerate() {
            scaled_ut.row_mut(i).scale_mut(*f);
        }
        let solve = v_t.transpose() * scaled_ut;
        Ok(Self {
            spec,
            design,
            solve,
            condition,
        })
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    /// Ratio of the largest to the smallest singular value of `A`.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Fits one position per frame (`positions.len() == T`).
    pub fn fit(&self, positions: &[Vector3<f64>]) -> Result<FitResult, EncodingError> {
        let t = self.spec.frame_count;
        if positions.len() != t {
            return Err(EncodingError::LengthMismatch {
                expected: t,
                found: positions.len(),
            });
        }
        let y = DMatrix::from_fn(t, 3, |r, c| positions[r][c]);
        let x = &self.solve * &y;
        let residual = &self.design * &x - &y;
        let mut rms = [0.0; 3];
        for (c, r) in rms.iter_mut().enumerate() {
            *r = (residual.column(c).norm_squared() / t as f64).sqrt();
        }
        Ok(FitResult {
            curve: PolyFourierCurve {
                spec: self.spec,
                coefficients: x.transpose(),
            },
            residual_rms: rms,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn synthesize(spec: &BasisSpec, coeffs: &DMatrix<f64>) -> Vec<Vector3<f64>> {
        // Independent of the fitter: evaluate the series term by term.
        (0..spec.frame_count)
            .map(|f| {
                let tau = spec.tau(f);
                let mut p = Vector3::zeros();
                for axis in 0..3 {
                    let mut v = coeffs[(axis, 0)];
                    for k in 1..=spec.d_pol {
                        v += coeffs[(axis, k)] * tau.powi(k as i32);
                    }
                    for k in 1..=spec.d_fourier {
                        let a = k as f64 * spec.omega * tau;
                        v += coeffs[(axis, spec.d_pol + 2 * k - 1)] * a.cos()
                            + coeffs[(axis, spec.d_pol + 2 * k)] * a.sin();
                    }
                    p[axis] = v;
                }
                p
            })
            .collect()
    }

    #[test]
    fn recovers_random_coefficients() {
        let spec = BasisSpec::new(3, 8, TAU, 100).unwrap();
        let fitter = TrajectoryFitter::new(spec, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = DMatrix::from_fn(3, spec.dim(), |_, _| rng.random_range(-1.0..1.0));
        let fit = fitter.fit(&synthesize(&spec, &truth)).unwrap();
        assert!((&fit.curve.coefficients - &truth).amax() < 1e-8);
        assert!(fit.residual_rms.iter().all(|r| *r < 1e-10));
    }

    #[test]
    fn constant_trajectory() {
        let spec = BasisSpec::new(3, 4, TAU, 30).unwrap();
        let p = Vector3::new(1.5, -2.0, 7.25);
        let fit = TrajectoryFitter::new(spec, 0.0).unwrap().fit(&vec![p; 30]).unwrap();
        let c = &fit.curve.coefficients;
        for axis in 0..3 {
            assert!((c[(axis, 0)] - p[axis]).abs() < 1e-10);
            for j in 1..spec.dim() {
                assert!(c[(axis, j)].abs() < 1e-10);
            }
        }
    }

    #[test]
    fn pure_harmonic_lands_in_its_columns() {
        let spec = BasisSpec::new(3, 6, TAU, 64).unwrap();
        let k = 4;
        let traj: Vec<_> = (0..64)
            .map(|f| {
                let a = k as f64 * TAU * spec.tau(f);
                Vector3::new(a.sin(), 2.0 * a.cos(), 0.5 * a.sin() - a.cos())
            })
            .collect();
        let fit = TrajectoryFitter::new(spec, 0.0).unwrap().fit(&traj).unwrap();
        let c = &fit.curve.coefficients;
        let (cos_col, sin_col) = (spec.d_pol + 2 * k - 1, spec.d_pol + 2 * k);
        let expected = [(0.0, 1.0), (2.0, 0.0), (-1.0, 0.5)];
        for (axis, (ec, es)) in expected.iter().enumerate() {
            assert!((c[(axis, cos_col)] - ec).abs() < 1e-8);
            assert!((c[(axis, sin_col)] - es).abs() < 1e-8);
            for j in (0..spec.dim()).filter(|j| *j != cos_col && *j != sin_col) {
                assert!(c[(axis, j)].abs() < 1e-8, "axis {axis} col {j}: {}", c[(axis, j)]);
            }
        }
        assert!(fit.residual_rms.iter().all(|r| *r < 1e-8));
    }

    #[test]
    fn underdetermined_needs_ridge() {
        let spec = BasisSpec::new(3, 4, TAU, 8).unwrap();
        assert!(matches!(
            TrajectoryFitter::new(spec, 0.0),
            Err(EncodingError::UnderdeterminedSystem { samples: 8, unknowns: 12 })
        ));
        let fitter = TrajectoryFitter::new(spec, 1e-3).unwrap();
        let fit = fitter.fit(&vec![Vector3::new(1.0, 2.0, 3.0); 8]).unwrap();
        assert!(fit.curve.coefficients.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn ridge_matches_augmented_least_squares() {
        let spec = BasisSpec::new(2, 2, TAU, 12).unwrap();
        let lambda = 0.3;
        let fitter = TrajectoryFitter::new(spec, lambda).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let traj: Vec<_> = (0..12)
            .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let fit = fitter.fit(&traj).unwrap();
        // Oracle: QR on [A; √λ I] x = [y; 0].
        let a = spec.design_matrix();
        let n = spec.dim();
        let mut aug = DMatrix::zeros(12 + n, n);
        aug.view_mut((0, 0), (12, n)).copy_from(&a);
        aug.view_mut((12, 0), (n, n)).copy_from(&(DMatrix::identity(n, n) * lambda.sqrt()));
        for axis in 0..3 {
            let mut rhs = nalgebra::DVector::zeros(12 + n);
            for f in 0..12 {
                rhs[f] = traj[f][axis];
            }
            let qr = aug.clone().qr();
            let qtb = qr.q().transpose() * rhs;
            let x = qr.r().solve_upper_triangular(&qtb).unwrap();
            for j in 0..n {
                assert!((x[j] - fit.curve.coefficients[(axis, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn aliased_basis_is_ill_conditioned() {
        // sin(4·2πτ) vanishes at every sample τ = f/8, leaving a zero column.
        let spec = BasisSpec::new(0, 4, TAU, 9).unwrap();
        assert!(matches!(
            TrajectoryFitter::new(spec, 0.0),
            Err(EncodingError::IllConditioned(_))
        ));
    }

    #[test]
    fn wrong_length() {
        let spec = BasisSpec::new(1, 1, TAU, 10).unwrap();
        let fitter = TrajectoryFitter::new(spec, 0.0).unwrap();
        assert!(matches!(
            fitter.fit(&[Vector3::zeros(); 3]),
            Err(EncodingError::LengthMismatch { expected: 10, found: 3 })
        ));
    }
}
