use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::io::{
    read_masks, write_cameras, write_flo, write_masks, write_pfm, write_rgb_png, write_tracks,
    FormatError, InstanceMaskFrame,
};

use super::{ground_truth, render_flow, render_frame, render_tracks, GroundTruth, Scene, SyntheticError};

pub const GT_TRAJECTORIES_HEADER: &str = "track_id,instance_id,frame,X,Y,Z";

/// File layout of a dataset directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub root: PathBuf,
}

impl DatasetPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn cameras(&self) -> PathBuf {
        self.root.join("cameras.json")
    }

    pub fn images_dir(&self) -> PathBuf {
        self.root.join("images")
    }

    pub fn depth_dir(&self) -> PathBuf {
        self.root.join("depth")
    }

    pub fn flow_dir(&self) -> PathBuf {
        self.root.join("flow")
    }

    pub fn image(&self, frame: usize) -> PathBuf {
        self.images_dir().join(format!("{frame:05}.png"))
    }

    pub fn depth(&self, frame: usize) -> PathBuf {
        self.depth_dir().join(format!("{frame:05}.pfm"))
    }

    /// Flow from `frame` to `frame + 1`.
    pub fn flow(&self, frame: usize) -> PathBuf {
        self.flow_dir().join(format!("{frame:05}.flo"))
    }

    pub fn tracks(&self) -> PathBuf {
        self.root.join("tracks.csv")
    }

    pub fn scene(&self) -> PathBuf {
        self.root.join("scene.json")
    }

    pub fn gt_masks_dir(&self) -> PathBuf {
        self.root.join("gt").join("masks")
    }

    pub fn gt_mask(&self, frame: usize) -> PathBuf {
        self.gt_masks_dir().join(format!("{frame:05}.pgm"))
    }

    pub fn gt_trajectories(&self) -> PathBuf {
        self.root.join("gt").join("trajectories.csv")
    }

    pub fn gt_motions(&self) -> PathBuf {
        self.root.join("gt").join("motions.json")
    }
}

fn io_err(path: &Path, source: std::io::Error) -> FormatError {
    FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_gt_trajectories(path: &Path, gt: &GroundTruth) -> Result<(), FormatError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(GT_TRAJECTORIES_HEADER.split(','))?;
    for (track, (instance, path)) in &gt.trajectories {
        for (frame, p) in path.iter().enumerate() {
            w.write_record([
                track.to_string(),
                instance.to_string(),
                frame.to_string(),
                p.x.to_string(),
                p.y.to_string(),
                p.z.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Renders every frame and writes the full dataset: cameras, images, depth,
/// flow, sampled tracks, the replayable spec and the ground truth.
pub fn write_dataset(scene: &Scene, root: &Path, n_tracks: usize) -> Result<GroundTruth, SyntheticError> {
    let paths = DatasetPaths::new(root);
    let frames = scene.frame_count();
    let renders: Vec<_> = (0..frames).into_par_iter().map(|f| render_frame(scene, f)).collect();
    let spec_json = serde_json::to_vec_pretty(&scene.spec).map_err(FormatError::from)?;
    std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
    std::fs::write(paths.scene(), spec_json).map_err(|e| io_err(&paths.scene(), e))?;
    write_cameras(paths.cameras(), &scene.cameras)?;
    (0..frames).into_par_iter().try_for_each(|f| -> Result<(), SyntheticError> {
        let r = &renders[f];
        write_rgb_png(paths.image(f), &r.image)?;
        write_pfm(paths.depth(f), &r.depth.depth)?;
        write_masks(paths.gt_mask(f), &r.masks)?;
        if f + 1 < frames {
            write_flo(paths.flow(f), &render_flow(scene, f, r)?)?;
        }
        Ok(())
    })?;
    let tracks = render_tracks(scene, &renders, n_tracks, scene.spec.seed ^ 0x7472_6163_6b73);
    write_tracks(paths.tracks(), &tracks.table)?;
    let gt = ground_truth(scene, &tracks);
    write_gt_trajectories(&paths.gt_trajectories(), &gt)?;
    let motions = serde_json::to_vec_pretty(&gt.motions).map_err(FormatError::from)?;
    std::fs::write(paths.gt_motions(), motions).map_err(|e| io_err(&paths.gt_motions(), e))?;
    Ok(gt)
}

/// Ground truth read back from a dataset directory.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFiles {
    pub trajectories: BTreeMap<u32, (u16, Vec<Vector3<f64>>)>,
    pub masks: Vec<InstanceMaskFrame>,
}

pub fn load_ground_truth(paths: &DatasetPaths, frame_count: usize) -> Result<GroundTruthFiles, FormatError> {
    let mut reader = csv::Reader::from_path(paths.gt_trajectories())?;
    if reader.headers()?.iter().collect::<Vec<_>>().join(",") != GT_TRAJECTORIES_HEADER {
        return Err(FormatError::MalformedHeader("ground-truth trajectory header".into()));
    }
    let mut trajectories: BTreeMap<u32, (u16, Vec<Vector3<f64>>)> = BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        let bad = |what: &str| FormatError::InvalidValue(format!("ground-truth {what}"));
        let field = |i: usize| row.get(i).ok_or_else(|| bad("row"));
        let track: u32 = field(0)?.parse().map_err(|_| bad("track id"))?;
        let instance: u16 = field(1)?.parse().map_err(|_| bad("instance id"))?;
        let frame: usize = field(2)?.parse().map_err(|_| bad("frame"))?;
        let mut xyz = [0.0; 3];
        for (k, v) in xyz.iter_mut().enumerate() {
            *v = field(3 + k)?.parse().map_err(|_| bad("coordinate"))?;
        }
        let entry = trajectories.entry(track).or_insert_with(|| (instance, Vec::new()));
        if frame != entry.1.len() {
            return Err(bad("frame order"));
        }
        entry.1.push(Vector3::from(xyz));
    }
    let masks = (0..frame_count)
        .map(|f| read_masks(paths.gt_mask(f), f))
        .collect::<Result<_, _>>()?;
    Ok(GroundTruthFiles { trajectories, masks })
}
