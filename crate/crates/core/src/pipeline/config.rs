use std::f64::consts::TAU;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::init::{InitParams, ScaleParams};
use crate::losses::LossWeights;

use super::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectConfig {
    /// Sampson error threshold in squared pixels (strict `>`).
    pub tau_epi: f64,
    /// Smallest kept component as a fraction of the image area.
    pub min_area_fraction: f64,
    /// Run detection on every `stride`-th frame.
    pub stride: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            tau_epi: 3.0,
            min_area_fraction: 0.0005,
            stride: 1,
        }
    }
}

impl DetectConfig {
    pub fn min_area(&self, width: usize, height: usize) -> usize {
        ((width * height) as f64 * self.min_area_fraction).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Ground-truth labels of a synthetic dataset (`gt/masks`).
    Oracle,
    /// Precomputed label masks in `provider_dir`.
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackConfig {
    pub provider: ProviderKind,
    /// Directory of `NNNNN.pgm` label masks for the `files` provider.
    pub provider_dir: String,
    pub tau_mask: f64,
    pub propagation_interval: usize,
    pub duplicate_overlap: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Oracle,
            provider_dir: String::new(),
            tau_mask: 0.8,
            propagation_interval: 10,
            duplicate_overlap: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    /// Number of query points tracked when tracks are sampled from a scene spec.
    pub query_points: usize,
    pub ransac_max_iters: usize,
    pub inlier_tol_fraction: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            query_points: 10_000,
            ransac_max_iters: 256,
            inlier_tol_fraction: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodeConfig {
    pub d_pol: usize,
    pub d_fourier: usize,
    pub omega: f64,
    pub ridge: f64,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            d_pol: 3,
            d_fourier: 32,
            omega: TAU,
            ridge: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    pub static_stride: usize,
    pub n_per_frame: usize,
    pub sigma: f64,
    pub opacity: f64,
    pub k_scale: f64,
    pub epsilon: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        let p = InitParams::default();
        Self {
            static_stride: p.static_stride,
            n_per_frame: p.n_per_frame,
            sigma: p.sigma,
            opacity: p.opacity,
            k_scale: p.scale.k_scale,
            epsilon: p.scale.epsilon,
            r_min: p.scale.r_min,
            r_max: p.scale.r_max,
        }
    }
}

impl InitConfig {
    pub fn params(&self, seed: u64) -> InitParams {
        InitParams {
            sigma: self.sigma,
            scale: ScaleParams {
                k_scale: self.k_scale,
                epsilon: self.epsilon,
                r_min: self.r_min,
                r_max: self.r_max,
            },
            opacity: self.opacity,
            static_stride: self.static_stride,
            n_per_frame: self.n_per_frame,
            seed,
        }
    }
}

/// Every tunable of the pipeline. Serialized next to the outputs; a rerun
/// from that file reproduces them byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub dataset: PathBuf,
    pub seed: u64,
    pub detect: DetectConfig,
    pub track: TrackConfig,
    pub flow: FlowConfig,
    pub encode: EncodeConfig,
    pub init: InitConfig,
    pub loss: LossWeights,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            seed: 0,
            detect: DetectConfig::default(),
            track: TrackConfig::default(),
            flow: FlowConfig::default(),
            encode: EncodeConfig::default(),
            init: InitConfig::default(),
            loss: LossWeights::default(),
        }
    }
}

impl PipelineConfig {
    pub fn to_toml(&self) -> Result<String, PipelineError> {
        toml::to_string(self).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: &str| Err(PipelineError::Config(m.to_string()));
        if !(self.detect.tau_epi > 0.0) {
            return fail("detect.tau_epi must be positive");
        }
        if self.detect.stride == 0 || self.track.propagation_interval == 0 || self.init.static_stride == 0 {
            return fail("strides and intervals must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.track.tau_mask) {
            return fail("track.tau_mask must lie in [0, 1]");
        }
        if !(self.init.sigma > 0.0) {
            return fail("init.sigma must be positive");
        }
        if !(self.encode.ridge >= 0.0) {
            return fail("encode.ridge must be non-negative");
        }
        if self.track.provider == ProviderKind::Files && self.track.provider_dir.is_empty() {
            return fail("track.provider_dir is required for the files provider");
        }
        self.loss.validate().map_err(|e| PipelineError::Config(e.to_string()))
    }
}
