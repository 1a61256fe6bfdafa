use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use soilspec::pipeline::ModelSpec;
use soilspec::synthgen::NoiseModel;
use soilspec::{Error, Result, Roi};

pub const RUN_CONFIG_FILE: &str = "run_config.json";

/// Everything needed to rerun a command, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roi: Option<RoiConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub models: Vec<ModelConfig>,
    pub paths: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub preset: String,
    pub dark_mean: f64,
    pub dark_std: f64,
    pub shot_scale: f64,
    pub block_texture_std: f64,
    pub specimen_std: f64,
}

impl NoiseConfig {
    pub fn new(preset: &str, n: &NoiseModel) -> Self {
        Self {
            preset: preset.to_string(),
            dark_mean: n.dark_mean,
            dark_std: n.dark_std,
            shot_scale: n.shot_scale,
            block_texture_std: n.block_texture_std,
            specimen_std: n.specimen_std,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiConfig {
    pub x1: usize,
    pub y1: usize,
}

impl From<Roi> for RoiConfig {
    fn from(r: Roi) -> Self {
        Self { x1: r.x1, y1: r.y1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub granularity: Vec<String>,
    pub stratify: bool,
    pub scaler_scope: String,
    pub energy: f64,
    pub smote: bool,
    pub smote_k: usize,
    pub strategies: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    pub knn_k: usize,
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl From<&ModelSpec> for ModelConfig {
    fn from(s: &ModelSpec) -> Self {
        Self {
            name: s.name().to_string(),
            knn_k: s.knn_k,
            n_trees: s.n_trees,
            max_depth: s.max_depth,
            min_leaf: s.min_leaf,
        }
    }
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
            threads: None,
            noise: None,
            roi: None,
            kappa: None,
            cv: None,
            models: Vec::new(),
            paths: BTreeMap::new(),
        }
    }

    pub fn path(mut self, key: &str, value: impl AsRef<Path>) -> Self {
        self.paths
            .insert(key.to_string(), value.as_ref().to_string_lossy().into_owned());
        self
    }

    pub fn write_into(&self, dir: impl AsRef<Path>) -> Result<()> {
        let path = dir.as_ref().join(RUN_CONFIG_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| io_error(&path, e))
    }

    pub fn read_from(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(RUN_CONFIG_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

pub fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}
