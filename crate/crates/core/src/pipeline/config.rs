use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::{DbscanParams, SplitConfig};
use crate::error::{Error, Result};
use crate::pointcloud::SampleConfig;
use crate::raster::RenderConfig;
use crate::scene::{Level, PlyConvention, SyntheticSceneSpec};
use crate::semantics::{AutoencoderConfig, CompareSpace, SemanticTrainConfig, DEFAULT_EMBEDDING_DIM, DEFAULT_TAU_NEG, DEFAULT_TAU_POS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Existing scene; a synthetic orchard is generated when absent.
    pub scene: Option<PathBuf>,
    pub convention: PlyConvention,
    pub vocabulary: Option<PathBuf>,
    pub autoencoder: Option<PathBuf>,
    /// `sphere:<radius>` or a point-cloud PLY.
    pub template: Option<String>,
    pub ground_truth: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            scene: None,
            convention: PlyConvention::Linear,
            vocabulary: None,
            autoencoder: None,
            template: None,
            ground_truth: None,
            output: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// When off, every Gaussian is kept.
    pub enabled: bool,
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
    pub tau_pos: f64,
    pub tau_neg: f64,
    pub level: Level,
    pub compare_space: CompareSpace,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            positives: vec!["apple".into()],
            negatives: vec!["leaf".into(), "branch".into()],
            tau_pos: DEFAULT_TAU_POS,
            tau_neg: DEFAULT_TAU_NEG,
            level: Level::Whole,
            compare_space: CompareSpace::Decoded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureStage {
    pub enabled: bool,
    pub views: usize,
    pub width: usize,
    pub height: usize,
    pub level: Level,
    pub optimizer: SemanticTrainConfig,
}

impl Default for FeatureStage {
    fn default() -> Self {
        Self { enabled: false, views: 4, width: 128, height: 128, level: Level::Whole, optimizer: SemanticTrainConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// DBSCAN radius in template radii.
    pub eps_factor: f64,
    pub min_samples: usize,
    pub split: SplitConfig,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { eps_factor: 0.6, min_samples: 20, split: SplitConfig::default() }
    }
}

impl ClusterConfig {
    pub fn dbscan(&self, template_radius: f64) -> DbscanParams {
        DbscanParams { eps: self.eps_factor * template_radius, min_samples: self.min_samples }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write an RGB preview render of the scene.
    pub render: bool,
    pub render_width: usize,
    pub render_height: usize,
    /// Omit wall-clock timings so reruns produce identical bytes.
    pub deterministic: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { render: false, render_width: 512, render_height: 512, deterministic: false }
    }
}

/// Everything a pipeline run depends on. Serialized as TOML with one table
/// per stage, so `filter.tau_pos = 0.2255` addresses a single value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub embedding_dim: usize,
    pub paths: Paths,
    pub scene: SyntheticSceneSpec,
    pub render: RenderConfig,
    pub autoencoder: AutoencoderConfig,
    pub features: FeatureStage,
    pub filter: FilterConfig,
    pub sample: SampleConfig,
    pub cluster: ClusterConfig,
    pub output: OutputConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            paths: Paths::default(),
            scene: SyntheticSceneSpec::default(),
            render: RenderConfig::default(),
            autoencoder: AutoencoderConfig::default(),
            features: FeatureStage::default(),
            filter: FilterConfig::default(),
            sample: SampleConfig::default(),
            cluster: ClusterConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Overrides one dotted key. `value` is read as a TOML literal and falls
    /// back to a plain string, so `paths.output=out` needs no quotes.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut root = toml::Table::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let parsed = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let mut parts: Vec<&str> = key.split('.').collect();
        let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config(format!("empty key {key:?}")))?;
        let mut table = &mut root;
        for part in parts {
            table = table
                .entry(part)
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("{key}: {part} is not a table")))?;
        }
        table.insert(last.to_string(), parsed);
        *self = root.try_into().map_err(|e: toml::de::Error| Error::Config(format!("{key}: {e}")))?;
        Ok(())
    }

    /// Checks every stage config and that referenced inputs exist.
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be positive".into()));
        }
        self.render.validate()?;
        self.sample.validate()?;
        self.cluster.split.validate()?;
        if !(self.cluster.eps_factor > 0.0) || self.cluster.min_samples == 0 {
            return Err(Error::Config("cluster.eps_factor must be > 0 and cluster.min_samples >= 1".into()));
        }
        if self.filter.enabled && self.filter.positives.is_empty() {
            return Err(Error::Config("filter.positives is empty".into()));
        }
        for t in [self.filter.tau_pos, self.filter.tau_neg] {
            if !(-1.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("threshold {t} outside [-1, 1]")));
            }
        }
        if self.features.enabled {
            self.features.optimizer.validate()?;
            if self.features.views == 0 || self.features.width == 0 || self.features.height == 0 {
                return Err(Error::Config("features needs at least one view of nonzero size".into()));
            }
        }
        let p = &self.paths;
        for path in [&p.scene, &p.vocabulary, &p.autoencoder, &p.ground_truth].into_iter().flatten() {
            if !path.exists() {
                return Err(Error::Config(format!("{} does not exist", path.display())));
            }
        }
        if let Some(t) = &p.template {
            if !t.starts_with("sphere:") && !Path::new(t).exists() {
                return Err(Error::Config(format!("template {t} does not exist")));
            }
        }
        if p.scene.is_some() {
            if p.autoencoder.is_none() {
                return Err(Error::Config("a loaded scene needs paths.autoencoder to decode its codes".into()));
            }
            if p.template.is_none() {
                return Err(Error::Config("a loaded scene needs paths.template".into()));
            }
        } else {
            self.scene.validate()?;
        }
        Ok(())
    }
}
