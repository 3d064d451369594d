//! Project configuration file (TOML).
//!
//! ```toml
//! model = "compact"            # full | compact: selects reference values and PPA fit
//!
//! [data]
//! train_file = "../data/optdigits.tra"
//! test_file = "../data/optdigits.tes"
//! threshold = 8
//!
//! [train]                      # same keys as a standalone training config
//! T = 5
//! s = 1.8
//! epochs = 100
//! clauses_per_class = 20
//! seed = 0
//!
//! [ensemble]
//! size = 20
//!
//! [output]
//! dir = "../runs/compact"
//!
//! [weights]                    # optional, NAND2-equivalent area per cell
//! inv = 0.5
//! nand2 = 1.0
//! dff = 4.0
//!
//! [verify]                     # optional
//! random_vectors = 10000
//! random_seed = 1
//!
//! [ppa]                        # optional
//! periods = "4:40:1"
//! # calibration = "my-anchors.toml"
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use flextm_core::dataset::DEFAULT_THRESHOLD;
use flextm_core::{GateWeights, ModelTag, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train_file: PathBuf,
    pub test_file: PathBuf,
    #[serde(default = "default_threshold")]
    pub threshold: u8,
}

fn default_threshold() -> u8 {
    DEFAULT_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub random_vectors: usize,
    pub random_seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            random_vectors: 10_000,
            random_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpaSection {
    pub periods: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<PathBuf>,
}

impl Default for PpaSection {
    fn default() -> Self {
        PpaSection {
            periods: "4:40:1".to_string(),
            calibration: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub model: ModelTag,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub ensemble: EnsembleConfig,
    pub output: OutputConfig,
    #[serde(default)]
    pub weights: GateWeights,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub ppa: PpaSection,
}

impl ProjectConfig {
    /// Defaults for one of the two reference configurations.
    pub fn preset(tag: ModelTag, data_dir: &Path, out_dir: &Path) -> Self {
        let (train, size) = match tag {
            ModelTag::Full => (TrainConfig::full(), 10),
            ModelTag::Compact => (TrainConfig::compact(), 20),
        };
        ProjectConfig {
            model: tag,
            data: DataConfig {
                train_file: data_dir.join("optdigits.tra"),
                test_file: data_dir.join("optdigits.tes"),
                threshold: DEFAULT_THRESHOLD,
            },
            train,
            ensemble: EnsembleConfig { size },
            output: OutputConfig {
                dir: out_dir.to_path_buf(),
            },
            weights: GateWeights::default(),
            verify: VerifyConfig::default(),
            ppa: PpaSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ProjectConfig = toml::from_str(text).context("invalid project config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("project config serializes")
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg = Self::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Ok(cfg.resolved(base))
    }

    pub fn resolved(mut self, base: &Path) -> Self {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.data.train_file);
        join(&mut self.data.test_file);
        join(&mut self.output.dir);
        if let Some(c) = self.ppa.calibration.as_mut() {
            join(c);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.train.threshold != self.data.threshold {
            bail!(
                "train.threshold ({}) differs from data.threshold ({})",
                self.train.threshold,
                self.data.threshold
            );
        }
        if self.ensemble.size == 0 {
            bail!("ensemble.size must be at least 1");
        }
        self.weights.validate()?;
        flextm_core::ppa::parse_periods(&self.ppa.periods)?;
        Ok(())
    }

    /// Checks that the input files exist before any step runs.
    pub fn check_paths(&self) -> Result<()> {
        for p in [&self.data.train_file, &self.data.test_file] {
            if !p.is_file() {
                bail!("data file {} not found", p.display());
            }
        }
        if let Some(c) = &self.ppa.calibration {
            if !c.is_file() {
                bail!("calibration file {} not found", c.display());
            }
        }
        Ok(())
    }
}

/// Reads a standalone training config: the `[train]` keys at top level.
pub fn load_train_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: TrainConfig = toml::from_str(&text).with_context(|| format!("in {}", path.display()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_losslessly() {
        for tag in [ModelTag::Full, ModelTag::Compact] {
            let cfg = ProjectConfig::preset(tag, Path::new("data"), Path::new("out"));
            let text = cfg.to_toml();
            assert_eq!(ProjectConfig::from_toml(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn rejects_inconsistent_threshold_and_unknown_keys() {
        let mut cfg = ProjectConfig::preset(ModelTag::Compact, Path::new("d"), Path::new("o"));
        cfg.train.threshold = 5;
        assert!(ProjectConfig::from_toml(&cfg.to_toml()).is_err());
        let cfg = ProjectConfig::preset(ModelTag::Compact, Path::new("d"), Path::new("o"));
        let text = cfg.to_toml() + "\n[extra]\nkey = 1\n";
        assert!(ProjectConfig::from_toml(&text).is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let cfg = ProjectConfig::preset(ModelTag::Compact, Path::new("data"), Path::new("out"))
            .resolved(Path::new("/etc/flextm"));
        assert_eq!(cfg.data.train_file, Path::new("/etc/flextm/data/optdigits.tra"));
        assert_eq!(cfg.output.dir, Path::new("/etc/flextm/out"));
    }
}
