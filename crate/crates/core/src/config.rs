//! Config-driven experiment description, loaded from TOML. Every field
//! has a shipped default; unknown keys are rejected with the offending
//! key named.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelConfig;
use crate::nn::TrainConfig;
use crate::scene::{PhyConfig, SceneConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodebookConfig {
    pub num_elements: usize,
    pub element_spacing: f64,
    pub num_beams_raw: usize,
    pub downsample: bool,
    pub ref_gain_at_1m: f64,
    pub wavelength_m: f64,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        Self {
            num_elements: 16,
            element_spacing: 0.5,
            num_beams_raw: 64,
            downsample: true,
            ref_gain_at_1m: 1.0,
            wavelength_m: 0.005,
        }
    }
}

impl CodebookConfig {
    pub fn phy_config(&self) -> PhyConfig<f64> {
        PhyConfig {
            num_elements: self.num_elements,
            element_spacing: self.element_spacing,
            num_beams: self.num_beams_raw,
            ref_gain_at_1m: self.ref_gain_at_1m,
            wavelength_m: self.wavelength_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub num_samples: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            num_samples: 3000,
            train_fraction: 0.7,
            seed: 0,
        }
    }
}

/// Per-model training configs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub vision: TrainConfig<f64>,
    pub position: TrainConfig<f64>,
    pub fusion: TrainConfig<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ks: vec![1, 2, 3],
            fractions: vec![0.1, 0.2, 0.4, 0.6, 0.8, 1.0],
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

/// Everything one experiment needs: scene, codebook, pipeline, per-model
/// training, and evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub output_dir: PathBuf,
    pub scene: SceneConfig<f64>,
    pub codebook: CodebookConfig,
    pub pipeline: PipelineConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: "synthetic-default".into(),
            output_dir: PathBuf::from("out"),
            scene: SceneConfig::default(),
            codebook: CodebookConfig::default(),
            pipeline: PipelineConfig::default(),
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if !(0.0 < self.pipeline.train_fraction && self.pipeline.train_fraction < 1.0) {
            return Err(Error::Config("pipeline.train_fraction must be in (0, 1)".into()));
        }
        if self.pipeline.num_samples < 2 {
            return Err(Error::Config("pipeline.num_samples must be >= 2".into()));
        }
        if self.codebook.downsample && self.codebook.num_beams_raw != 64 {
            return Err(Error::Config(
                "downsampling is defined for a 64-beam raw codebook".into(),
            ));
        }
        self.training.vision.validate()?;
        self.training.position.validate()?;
        self.training.fusion.validate()?;
        Ok(())
    }

    /// Applies the CLI `--seed` override to every seeded stage.
    pub fn override_seed(&mut self, seed: u64) {
        self.scene.rng_seed = seed;
        self.pipeline.seed = seed;
        self.training.vision.rng_seed = seed;
        self.training.position.rng_seed = seed;
        self.training.fusion.rng_seed = seed;
    }
}
