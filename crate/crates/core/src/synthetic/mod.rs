//! Fully ground-truthed point-set scenes: rigid objects on scripted
//! trajectories in front of a static background, seen by a moving camera.
//! Rendering is exact z-buffered point splatting, so depth, flow, masks and
//! tracks are mutually consistent by construction.

mod dataset;
mod render;
mod scene;

pub use dataset::{
    load_ground_truth, write_dataset, DatasetPaths, GroundTruthFiles, GT_TRAJECTORIES_HEADER,
};
pub use render::{
    ground_truth, render_flow, render_frame, render_tracks, GroundTruth, RenderedFrame,
    SampledTracks,
};
pub use scene::{
    demo_scene, Background, CameraPath, ColoredPoint, MotionScript, ObjectSpec, Owner, Scene,
    ScenePoint, SceneSpec, Shape,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Format(#[from] crate::io::FormatError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}
