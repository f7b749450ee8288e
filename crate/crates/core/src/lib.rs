//! Motion initialization for monocular dynamic-scene Gaussian reconstruction.
//!
//! The crate turns per-frame cameras, depth, optical flow, instance masks and
//! 2D point tracks into refined 3D scene flow, Poly-Fourier trajectory
//! encodings and initial static/dynamic Gaussian sets. The stages are:
//!
//! 1. [`detection`]: Sampson epipolar error on optical flow, thresholded into
//!    dynamic regions and box prompts.
//! 2. [`tracking`]: prompt/accept/propagate loop against a pluggable
//!    [`tracking::MaskProvider`], followed by a reverse propagation pass.
//! 3. [`scene_flow`]: track-to-instance assignment, depth lifting, per-instance
//!    rigid refinement (Kabsch + RANSAC) and gap interpolation.
//! 4. [`encoding`] and [`init`]: least-squares Poly-Fourier fitting and
//!    Gaussian record assembly.
//!
//! [`losses`] holds the photometric/depth objective used downstream,
//! [`synthetic`] renders fully ground-truthed scenes, and [`pipeline`] wires
//! everything together behind file-based stage boundaries.

pub mod detection;
pub mod encoding;
pub mod geometry;
pub mod init;
pub mod io;
pub mod losses;
pub mod pipeline;
pub mod raster;
pub mod scene_flow;
pub mod synthetic;
pub mod tracking;

pub use geometry::{CameraFrame, Quaternion, RigidTransform};
pub use raster::Raster;
