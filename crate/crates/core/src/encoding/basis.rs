use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::EncodingError;

/// Degrees and time normalization of a Poly-Fourier basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub d_pol: usize,
    pub d_fourier: usize,
    /// Base angular frequency in radians per normalized time unit.
    pub omega: f64,
    /// Number of frames `T`; frame `f` maps to `τ = f / (T − 1)`.
    pub frame_count: usize,
}

impl BasisSpec {
    pub fn new(
        d_pol: usize,
        d_fourier: usize,
        omega: f64,
        frame_count: usize,
    ) -> Result<Self, EncodingError> {
        if frame_count == 0 {
            return Err(EncodingError::InvalidSpec("frame count must be positive".into()));
        }
        if !omega.is_finite() || omega <= 0.0 {
            return Err(EncodingError::InvalidSpec(format!(
                "omega must be positive and finite, got {omega}"
            )));
        }
        Ok(Self {
            d_pol,
            d_fourier,
            omega,
            frame_count,
        })
    }

    /// Number of basis functions, `1 + d_pol + 2·d_fourier`.
    pub fn dim(&self) -> usize {
        1 + self.d_pol + 2 * self.d_fourier
    }

    pub fn tau(&self, frame: usize) -> f64 {
        if self.frame_count <= 1 {
            0.0
        } else {
            frame as f64 / (self.frame_count - 1) as f64
        }
    }

    pub fn basis_row(&self, tau: f64) -> DVector<f64> {
        let mut row = DVector::zeros(self.dim());
        self.fill_row(tau, row.as_mut_slice());
        row
    }

    pub(crate) fn fill_row(&self, tau: f64, out: &mut [f64]) {
        out[0] = 1.0;
        let mut p = 1.0;
        for k in 1..=self.d_pol {
            p *= tau;
            out[k] = p;
        }
        let base = 1 + self.d_pol;
        for k in 1..=self.d_fourier {
            let (s, c) = (k as f64 * self.omega * tau).sin_cos();
            out[base + 2 * (k - 1)] = c;
            out[base + 2 * (k - 1) + 1] = s;
        }
    }

    /// `T × dim` design matrix with one basis row per frame.
    pub fn design_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.frame_count, self.dim());
        let mut row = vec![0.0; self.dim()];
        for f in 0..self.frame_count {
            self.fill_row(self.tau(f), &mut row);
            for (j, v) in row.iter().enumerate() {
                a[(f, j)] = *v;
            }
        }
        a
    }

    /// Human-readable names of the basis columns, e.g. `t^2`, `cos3`.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec!["const".to_string()];
        names.extend((1..=self.d_pol).map(|k| format!("t^{k}")));
        for k in 1..=self.d_fourier {
            names.push(format!("cos{k}"));
            names.push(format!("sin{k}"));
        }
        names
    }
}

/// Coefficient matrix (`rows × dim`) over a [`BasisSpec`]; row `i` is the
/// curve of output component `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyFourierCurve {
    pub spec: BasisSpec,
    pub coefficients: DMatrix<f64>,
}

impl PolyFourierCurve {
    pub fn zeros(spec: BasisSpec, rows: usize) -> Self {
        Self {
            spec,
            coefficients: DMatrix::zeros(rows, spec.dim()),
        }
    }

    pub fn evaluate(&self, tau: f64) -> DVector<f64> {
        &self.coefficients * self.spec.basis_row(tau)
    }

    /// Evaluates a 3-row curve as a point.
    pub fn evaluate3(&self, tau: f64) -> Vector3<f64> {
        let v = self.evaluate(tau);
        Vector3::new(v[0], v[1], v[2])
    }
}
