//! Run configuration files.
//!
//! ```toml
//! variant = "EASN-C"
//!
//! [model]
//! stages = 3
//! n = 8
//! m = 16
//!
//! [train]
//! lambda = 0.01
//! steps = 2000
//!
//! [paths]
//! dataset = "synthetic"   # or a directory of PNG/PNM images
//! out = "runs/easn-c"
//!
//! [synthetic]
//! count = 64
//! size = 32
//! ```
//!
//! Every key is optional and unknown keys are rejected. Relative paths are
//! resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use easn::{ModelConfig, TrainConfig, Variant};
use serde::Deserialize;

use crate::CliError;

/// Keyword selecting generated images instead of a directory.
pub const SYNTHETIC: &str = "synthetic";
const MAX_SYNTHETIC_SIDE: usize = 4096;

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub variant: String,
    pub model: ModelSection,
    pub train: TrainSection,
    pub paths: PathsSection,
    pub synthetic: SyntheticSection,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub stages: usize,
    pub n: usize,
    pub m: usize,
    pub kernel: usize,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lambda: f64,
    pub lr_init: f64,
    pub batch: usize,
    pub crop: usize,
    pub steps: usize,
    pub plateau_patience_epochs: usize,
    pub lr_factor: f64,
    pub max_lr_drops: usize,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub dataset: String,
    pub out: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub count: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: ModelConfig::default().variant.name().to_string(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            paths: PathsSection::default(),
            synthetic: SyntheticSection::default(),
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            stages: m.stages,
            n: m.n,
            m: m.m,
            kernel: m.kernel,
            seed: m.seed,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            lambda: t.lambda,
            lr_init: t.lr_init,
            batch: t.batch,
            crop: t.crop,
            steps: t.steps,
            plateau_patience_epochs: t.plateau_patience_epochs,
            lr_factor: t.lr_factor,
            max_lr_drops: t.max_lr_drops,
            seed: t.seed,
        }
    }
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            dataset: SYNTHETIC.to_string(),
            out: PathBuf::from("runs/default"),
        }
    }
}

impl Default for SyntheticSection {
    fn default() -> Self {
        SyntheticSection {
            count: 64,
            size: 32,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    Dir(PathBuf),
    Synthetic { count: usize, size: usize, seed: u64 },
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub variant: Option<String>,
    /// Replaces both the model and the training seed.
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// A fully validated run.
#[derive(Clone, Debug)]
pub struct Run {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub dataset: DatasetSource,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Usage(msg) => CliError::Usage(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Applies `overrides` and checks every field. `base` anchors relative
    /// paths. Nothing is read beyond checking that a dataset directory exists.
    pub fn resolve(&self, base: &Path, overrides: &Overrides) -> Result<Run, CliError> {
        let variant_name = overrides.variant.as_deref().unwrap_or(&self.variant);
        let variant: Variant = variant_name.parse().map_err(CliError::usage)?;
        let seed = |own: u64| overrides.seed.unwrap_or(own);
        let model = ModelConfig {
            stages: self.model.stages,
            n: self.model.n,
            m: self.model.m,
            kernel: self.model.kernel,
            variant,
            seed: seed(self.model.seed),
        };
        model.validate().map_err(CliError::usage)?;
        let t = &self.train;
        let train = TrainConfig {
            lambda: t.lambda,
            lr_init: t.lr_init,
            batch: t.batch,
            crop: t.crop,
            steps: t.steps,
            plateau_patience_epochs: t.plateau_patience_epochs,
            lr_factor: t.lr_factor,
            max_lr_drops: t.max_lr_drops,
            seed: seed(t.seed),
        };
        train.validate(&model).map_err(CliError::usage)?;
        if train.steps == 0 {
            return Err(CliError::Usage("train.steps must be at least 1".into()));
        }

        let dataset = if self.paths.dataset == SYNTHETIC {
            let s = &self.synthetic;
            if s.count == 0 {
                return Err(CliError::Usage("synthetic.count must be at least 1".into()));
            }
            if s.size < train.crop || s.size > MAX_SYNTHETIC_SIDE {
                return Err(CliError::Usage(format!(
                    "synthetic.size must be between train.crop ({}) and {MAX_SYNTHETIC_SIDE}, got {}",
                    train.crop, s.size
                )));
            }
            DatasetSource::Synthetic {
                count: s.count,
                size: s.size,
                seed: s.seed,
            }
        } else {
            if self.paths.dataset.is_empty() {
                return Err(CliError::Usage("paths.dataset is empty".into()));
            }
            let dir = base.join(&self.paths.dataset);
            if !dir.is_dir() {
                return Err(CliError::Usage(format!("dataset directory {} does not exist", dir.display())));
            }
            DatasetSource::Dir(dir)
        };

        let out = match &overrides.out {
            Some(p) => p.clone(),
            None if self.paths.out.as_os_str().is_empty() => {
                return Err(CliError::Usage("paths.out is empty".into()));
            }
            None => base.join(&self.paths.out),
        };
        Ok(Run {
            model,
            train,
            dataset,
            out,
        })
    }
}

/// Directory that relative paths in the config at `path` refer to.
pub fn config_base(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
