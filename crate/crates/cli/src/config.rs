//! Versioned TOML configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use skillscout_core::rl::TrainConfig;
use skillscout_core::runner::DEFAULT_FIRST_TIME_SHARE;
use skillscout_core::usersim::IntentModelConfig;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// Environment variable naming a config file when `--config` is absent.
pub const CONFIG_ENV: &str = "SKILLSCOUT_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub format_version: u32,
    pub catalog: CatalogConfig,
    /// Prompt catalog file; the built-in prompts when absent.
    pub prompts: Option<PathBuf>,
    /// NLU rules file; the built-in rules when absent.
    pub rules: Option<PathBuf>,
    pub bootstrap: BootstrapConfig,
    pub intent_model: IntentModelConfig,
    pub train: TrainConfig,
    pub service: ServiceConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            catalog: CatalogConfig::default(),
            prompts: None,
            rules: None,
            bootstrap: BootstrapConfig::default(),
            intent_model: IntentModelConfig::default(),
            train: TrainConfig::desk(0),
            service: ServiceConfig::default(),
        }
    }
}

/// A catalog file, or the shape of a synthetic one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogConfig {
    pub path: Option<PathBuf>,
    /// Seed of the synthetic catalog.
    pub seed: u64,
    pub skills: usize,
    pub roots: usize,
    pub categories: usize,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        Self {
            path: None,
            seed: 1,
            skills: 1903,
            roots: 48,
            categories: 191,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub episodes: usize,
    pub first_time_share: f64,
    pub held_out_fraction: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            episodes: 20_000,
            first_time_share: DEFAULT_FIRST_TIME_SHARE,
            held_out_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub listen: String,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
    /// Probability that the NLU mislabels an utterance; 0 disables noise.
    pub nlu_noise: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            checkpoint: None,
            log: None,
            nlu_noise: 0.0,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text).context("invalid config")?;
        if cfg.format_version != CONFIG_FORMAT_VERSION {
            bail!(
                "config format_version {} is not supported (expected {CONFIG_FORMAT_VERSION})",
                cfg.format_version
            );
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    /// `--config` wins over the environment variable; defaults otherwise.
    pub fn resolve(flag: Option<&Path>) -> anyhow::Result<Self> {
        match flag {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = Config::from_toml("format_version = 1\n[train]\ntotal_steps = 500\n").unwrap();
        assert_eq!(cfg.train.total_steps, 500);
        assert_eq!(cfg.catalog, CatalogConfig::default());
    }

    #[test]
    fn rejects_unknown_fields_and_versions() {
        assert!(Config::from_toml("format_version = 1\nbogus = 3\n").is_err());
        assert!(Config::from_toml("format_version = 2\n").is_err());
    }

    #[test]
    fn default_round_trips() {
        let text = toml::to_string(&Config::default()).unwrap();
        assert_eq!(Config::from_toml(&text).unwrap(), Config::default());
    }
}
