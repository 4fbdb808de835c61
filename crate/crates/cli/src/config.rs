use std::path::{Path, PathBuf};

use anyhow::Context;
use edgeattnet::data::SyntheticConfig;
use edgeattnet::metrics::ScaleSet;
use edgeattnet::model::{ModelSpec, VariantKind};
use edgeattnet::preprocess::PreprocessConfig;
use edgeattnet::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const RUN_CONFIG_FILE: &str = "run_config.json";

/// Everything a command needs, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    /// Split listing written by `train`; `evaluate` then scores the test ids only.
    pub split_file: Option<PathBuf>,
    pub variant: VariantKind,
    /// Encoder width of the first stage; `None` is the full-size network.
    pub base_width: Option<usize>,
    pub input_size: usize,
    /// Train/validation/test counts; `None` takes 75% / 12.5% / rest.
    pub split: Option<[usize; 3]>,
    pub overlay: bool,
    /// Run the preprocessing pipeline over synthetic images before saving.
    pub preprocess_synthetic: bool,
    pub train: TrainConfig,
    pub synthetic: SyntheticConfig,
    pub preprocess: PreprocessConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            input: None,
            output: None,
            checkpoint: None,
            annotations: None,
            split_file: None,
            variant: VariantKind::Edgeattnet,
            base_width: None,
            input_size: 256,
            split: None,
            overlay: false,
            preprocess_synthetic: false,
            train: TrainConfig::default(),
            synthetic: SyntheticConfig::default(),
            preprocess: PreprocessConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// JSON run configuration; flags given alongside override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<VariantKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Seeds training, splitting and synthetic generation.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub input_size: Option<usize>,
    /// First-stage encoder width of a narrowed network.
    #[arg(long)]
    pub base_width: Option<usize>,
    /// Comma-separated multiscale deltas, e.g. `1,1/2,0.25`.
    #[arg(long)]
    pub scales: Option<ScaleSet>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(CliError::Usage)?;
        serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))
            .map_err(CliError::Usage)
    }

    /// Config file (if any) with flag overrides applied.
    pub fn resolve(command: &str, o: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.command = command.to_string();
        if let Some(v) = o.variant {
            cfg.variant = v;
        }
        if let Some(v) = o.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = o.lr {
            cfg.train.lr = v;
        }
        if let Some(v) = o.batch {
            cfg.train.batch_size = v;
        }
        if let Some(v) = o.seed {
            cfg.train.seed = v;
            cfg.synthetic.seed = v;
        }
        if let Some(v) = o.input_size {
            cfg.input_size = v;
        }
        if let Some(v) = o.base_width {
            cfg.base_width = Some(v);
        }
        if let Some(v) = &o.scales {
            cfg.train.scales = v.clone();
        }
        if let Some(v) = o.threshold {
            cfg.train.threshold = v;
        }
        if !(0.0..=1.0).contains(&cfg.train.threshold) {
            return Err(CliError::usage(format!("threshold {} outside [0, 1]", cfg.train.threshold)));
        }
        Ok(cfg)
    }

    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        let spec = match self.base_width {
            None => ModelSpec::reference(self.variant).with_input_size(self.input_size, self.input_size),
            Some(b) => ModelSpec::scaled(self.variant, b, self.input_size),
        };
        spec.validate().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(spec)
    }

    pub fn require<'a>(&self, field: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
        field
            .as_deref()
            .ok_or_else(|| CliError::usage(format!("{} needs --{flag} (or `{flag}` in --config)", self.command)))
    }

    /// SHA-256 of the serialized configuration, lowercase hex.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(bytes))
    }

    pub fn write_to(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(RUN_CONFIG_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))
    }
}
