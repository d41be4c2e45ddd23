use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::postprocess::{Connectivity, DEFAULT_MIN_SIZE};
use crate::preprocess::DEFAULT_LEVELS;
use crate::radiomics::RadiomicsConfig;
use crate::survival::GbtParams;
use crate::training::{NetworkConfig, TrainConfig};

/// Name of the environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "GLIOMAPIPE_SEED";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory of study manifests (`*.toml`).
    pub studies: PathBuf,
    /// Manifest of the histogram-matching reference study.
    pub reference: PathBuf,
    pub output: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub n_levels: usize,
    /// z-score statistics over foreground only, leaving background at 0.
    pub foreground_only: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            n_levels: DEFAULT_LEVELS,
            foreground_only: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostprocessConfig {
    pub min_size: usize,
    pub connectivity: u32,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            min_size: DEFAULT_MIN_SIZE,
            connectivity: 26,
        }
    }
}

impl PostprocessConfig {
    pub fn connectivity(&self) -> Result<Connectivity> {
        Connectivity::from_count(self.connectivity)
    }
}

/// Everything a pipeline run depends on. The global `seed` drives both
/// network training and tree subsampling.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub preprocess: PreprocessConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub postprocess: PostprocessConfig,
    pub radiomics: RadiomicsConfig,
    pub survival: GbtParams,
}

impl PipelineConfig {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for p in [&mut cfg.paths.studies, &mut cfg.paths.reference, &mut cfg.paths.output] {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        cfg.apply_seed(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.train.validate()?;
        self.survival.validate()?;
        self.postprocess.connectivity()?;
        if self.preprocess.n_levels < 2 {
            return Err(Error::Config("preprocess.n_levels must be >= 2".into()));
        }
        if !(self.radiomics.bin_width > 0.0) {
            return Err(Error::Config("radiomics.bin_width must be positive".into()));
        }
        Ok(())
    }

    /// Sets the global seed and propagates it to the seeded components.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        self.survival.seed = seed;
    }

    /// Applies a `GLIOMAPIPE_SEED`-style override if one is given.
    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            let seed = v
                .trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
            self.apply_seed(seed);
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }
}
