//! Poly-Fourier trajectory encoding.
//!
//! A trajectory over normalized time `τ ∈ [0, 1]` is a linear combination of
//! the basis
//!
//! ```text
//! φ(τ) = [1, τ, …, τ^d_pol, cos(ωτ), sin(ωτ), …, cos(d_F ωτ), sin(d_F ωτ)]
//! ```
//!
//! Coefficients are fitted per trajectory by least squares ([`TrajectoryFitter`]),
//! and evaluated as the time-dependent position and rotation of a dynamic
//! Gaussian ([`DeformationParams`]).

mod basis;
mod deform;
mod fit;

pub use basis::{BasisSpec, PolyFourierCurve};
pub use deform::DeformationParams;
pub use fit::{FitResult, TrajectoryFitter};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodingError {
    #[error("{samples} samples cannot determine {unknowns} coefficients without regularization")]
    UnderdeterminedSystem { samples: usize, unknowns: usize },
    #[error("design matrix condition number {0:e} is too large for an unregularized fit")]
    IllConditioned(f64),
    #[error("rotation offset plus identity has norm {0:e}; cannot normalize")]
    DegenerateRotation(f64),
    #[error("trajectory has no position at frame {0}")]
    IncompleteTrajectory(usize),
    #[error("invalid basis: {0}")]
    InvalidSpec(String),
    #[error("expected {expected} samples, got {found}")]
    LengthMismatch { expected: usize, found: usize },
}
