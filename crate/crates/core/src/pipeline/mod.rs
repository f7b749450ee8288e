//! File-based orchestration of detect → track → flow → encode → init.
//!
//! Every stage reads its inputs from the dataset directory and from earlier
//! stage directories, writes its outputs under `<out>/<stage>/`, and records
//! a `manifest.json` with input hashes, the full configuration and output
//! hashes. Nothing is passed in memory between stages.

mod config;
mod files;
mod stages;
mod verify;

pub use config::{
    DetectConfig, EncodeConfig, FlowConfig, InitConfig, PipelineConfig, ProviderKind, TrackConfig,
};
pub use files::{
    read_coefficients, read_trajectories, write_coefficients, write_trajectories, EncodedTrack,
    FrameRegions, COEFFICIENTS_PREFIX, TRAJECTORIES_HEADER,
};
pub use stages::{run_detect, run_encode, run_flow, run_init, run_track};
pub use verify::{verify, InstanceIou, VerifyReport, VERIFY_RMSE_TOL};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::detection::DetectionError;
use crate::encoding::EncodingError;
use crate::init::InitError;
use crate::io::FormatError;
use crate::scene_flow::SceneFlowError;
use crate::synthetic::SyntheticError;
use crate::tracking::TrackingError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Detect,
    Track,
    Flow,
    Encode,
    Init,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Detect, Stage::Track, Stage::Flow, Stage::Encode, Stage::Init];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Detect => "detect",
            Stage::Track => "track",
            Stage::Flow => "flow",
            Stage::Encode => "encode",
            Stage::Init => "init",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Underlying failure of a stage.
#[derive(Debug, Error)]
pub enum StageFailure {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    SceneFlow(#[from] SceneFlowError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Init(#[from] InitError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{stage} stage: missing input {}", path.display())]
    MissingInput { stage: Stage, path: PathBuf },
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: StageFailure,
    },
}

impl PipelineError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Config(_) => None,
            PipelineError::MissingInput { stage, .. } | PipelineError::Stage { stage, .. } => Some(*stage),
        }
    }
}

/// Wraps any stage-level error with the stage name.
pub(crate) fn fail<E: Into<StageFailure>>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        source: e.into(),
    }
}

pub(crate) fn require(stage: Stage, path: PathBuf) -> Result<PathBuf, PipelineError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(PipelineError::MissingInput { stage, path })
    }
}

pub fn sha256_file(path: &Path) -> Result<String, FormatError> {
    let bytes = std::fs::read(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Provenance record written next to each stage's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: Stage,
    /// Label (`dataset/...` or `<stage>/...`) to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub config: PipelineConfig,
    pub outputs: BTreeMap<String, String>,
}

/// Output directory layout.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.name())
    }

    pub fn manifest(&self, stage: Stage) -> PathBuf {
        self.stage_dir(stage).join("manifest.json")
    }

    pub fn detect_mask(&self, frame: usize) -> PathBuf {
        self.stage_dir(Stage::Detect).join("masks").join(format!("{frame:05}.pgm"))
    }

    pub fn regions(&self) -> PathBuf {
        self.stage_dir(Stage::Detect).join("regions.json")
    }

    pub fn track_mask(&self, frame: usize) -> PathBuf {
        self.stage_dir(Stage::Track).join("masks").join(format!("{frame:05}.pgm"))
    }

    pub fn timelines(&self) -> PathBuf {
        self.stage_dir(Stage::Track).join("timelines.json")
    }

    pub fn trajectories(&self) -> PathBuf {
        self.stage_dir(Stage::Flow).join("trajectories.csv")
    }

    pub fn motions(&self) -> PathBuf {
        self.stage_dir(Stage::Flow).join("motions.json")
    }

    pub fn coefficients(&self) -> PathBuf {
        self.stage_dir(Stage::Encode).join("coefficients.csv")
    }

    pub fn basis(&self) -> PathBuf {
        self.stage_dir(Stage::Encode).join("basis.json")
    }

    pub fn gaussians(&self) -> PathBuf {
        self.stage_dir(Stage::Init).join("gaussians.ply")
    }
}

/// Collects hashed inputs and outputs while a stage runs.
pub(crate) struct ManifestBuilder<'a> {
    stage: Stage,
    cfg: &'a PipelineConfig,
    layout: &'a OutputLayout,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

fn label(base: &Path, prefix: &str, path: &Path) -> String {
    let rel = path.strip_prefix(base).unwrap_or(path);
    let rel = rel.to_string_lossy().replace('\\', "/");
    if prefix.is_empty() {
        rel
    } else {
        format!("{prefix}/{rel}")
    }
}

impl<'a> ManifestBuilder<'a> {
    pub(crate) fn new(stage: Stage, cfg: &'a PipelineConfig, layout: &'a OutputLayout) -> Self {
        Self {
            stage,
            cfg,
            layout,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub(crate) fn input(&mut self, path: &Path) -> Result<(), PipelineError> {
        let key = if path.starts_with(&self.cfg.dataset) {
            label(&self.cfg.dataset, "dataset", path)
        } else if path.starts_with(&self.layout.root) {
            label(&self.layout.root, "", path)
        } else {
            path.display().to_string()
        };
        let hash = sha256_file(path).map_err(fail(self.stage))?;
        self.inputs.insert(key, hash);
        Ok(())
    }

    pub(crate) fn output(&mut self, path: &Path) -> Result<(), PipelineError> {
        let hash = sha256_file(path).map_err(fail(self.stage))?;
        self.outputs.insert(label(&self.layout.root, "", path), hash);
        Ok(())
    }

    pub(crate) fn finish(self) -> Result<StageManifest, PipelineError> {
        let manifest = StageManifest {
            stage: self.stage,
            inputs: self.inputs,
            config: self.cfg.clone(),
            outputs: self.outputs,
        };
        let bytes = serde_json::to_vec_pretty(&manifest)
            .map_err(|e| fail::<FormatError>(self.stage)(e.into()))?;
        let path = self.layout.manifest(self.stage);
        std::fs::write(&path, bytes).map_err(|source| {
            fail::<FormatError>(self.stage)(FormatError::Io {
                path: path.display().to_string(),
                source,
            })
        })?;
        Ok(manifest)
    }
}

/// Writes `config.toml` into the output root.
pub fn write_config(cfg: &PipelineConfig, layout: &OutputLayout) -> Result<(), PipelineError> {
    cfg.validate()?;
    let text = cfg.to_toml()?;
    std::fs::create_dir_all(&layout.root)
        .and_then(|_| std::fs::write(layout.config(), text))
        .map_err(|e| PipelineError::Config(format!("{}: {e}", layout.config().display())))
}

pub fn read_config(path: &Path) -> Result<PipelineConfig, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    PipelineConfig::from_toml(&text)
}

/// Runs one stage and logs its wall-clock time.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig, layout: &OutputLayout) -> Result<StageManifest, PipelineError> {
    let start = Instant::now();
    let manifest = match stage {
        Stage::Detect => run_detect(cfg, layout),
        Stage::Track => run_track(cfg, layout),
        Stage::Flow => run_flow(cfg, layout),
        Stage::Encode => run_encode(cfg, layout),
        Stage::Init => run_init(cfg, layout),
    }?;
    info!("{stage}: {} outputs in {:.2?}", manifest.outputs.len(), start.elapsed());
    Ok(manifest)
}

/// Every stage in order. Outputs of finished stages stay on disk when a
/// later stage fails.
pub fn run_pipeline(cfg: &PipelineConfig, layout: &OutputLayout) -> Result<Vec<StageManifest>, PipelineError> {
    write_config(cfg, layout)?;
    Stage::ALL.iter().map(|&s| run_stage(s, cfg, layout)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_relative() {
        let base = Path::new("/a/b");
        assert_eq!(label(base, "dataset", Path::new("/a/b/flow/00001.flo")), "dataset/flow/00001.flo");
        assert_eq!(label(base, "", Path::new("/a/b/init/gaussians.ply")), "init/gaussians.ply");
    }

    #[test]
    fn missing_input_names_stage() {
        let err = require(Stage::Detect, PathBuf::from("/definitely/not/here")).unwrap_err();
        assert_eq!(err.stage(), Some(Stage::Detect));
        assert!(err.to_string().starts_with("detect stage: missing input"));
    }

    #[test]
    fn default_config_round_trips() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "seed = 1\n[detect]\ntau = 2.0\n";
        assert!(matches!(PipelineConfig::from_toml(text), Err(PipelineError::Config(_))));
    }
}
