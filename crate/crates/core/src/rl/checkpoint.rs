use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::QNetwork;
use super::train::{DqnPolicy, TrainConfig};
use crate::catalog::Catalog;
use crate::dialog::{EncoderMode, StateEncoder};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// A trained policy on disk, with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyCheckpoint {
    pub format_version: u32,
    pub encoder: EncoderMode,
    pub input_dim: usize,
    pub category_count: usize,
    pub config: TrainConfig,
    pub network: QNetwork,
}

impl PolicyCheckpoint {
    pub fn new(network: QNetwork, config: TrainConfig) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            encoder: network.mode,
            input_dim: network.input_dim(),
            category_count: network.cardinalities.get(4).copied().unwrap_or(0),
            config,
            network,
        }
    }

    pub fn encoder(&self) -> StateEncoder {
        StateEncoder::new(self.category_count)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Self = serde_json::from_str(text).map_err(|e| Error::parse("policy checkpoint", e))?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::parse(
                "policy checkpoint",
                format!("unsupported format_version {}", ckpt.format_version),
            ));
        }
        ckpt.network.validate()?;
        if ckpt.network.mode != ckpt.encoder
            || ckpt.network.input_dim() != ckpt.input_dim
            || ckpt.network.cardinalities.as_slice() != ckpt.encoder().cardinalities.as_slice()
        {
            return Err(Error::Architecture("checkpoint header disagrees with network".into()));
        }
        Ok(ckpt)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Greedy policy for `catalog`; the catalog must have the category
    /// count the network was trained with.
    pub fn policy_for(&self, catalog: &Catalog) -> Result<DqnPolicy> {
        if catalog.category_count() != self.category_count {
            return Err(Error::Architecture(format!(
                "checkpoint expects {} categories, catalog has {}",
                self.category_count,
                catalog.category_count()
            )));
        }
        Ok(DqnPolicy::new(self.network.clone(), self.encoder()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::init_network;

    #[test]
    fn round_trip_and_rejects_mismatch() {
        let enc = StateEncoder::new(191);
        let net = init_network(&enc, 7, 4).unwrap();
        let ckpt = PolicyCheckpoint::new(net, TrainConfig::desk(4));
        let back = PolicyCheckpoint::from_json(&ckpt.to_json()).unwrap();
        assert_eq!(back, ckpt);

        let mut bad = ckpt.clone();
        bad.category_count = 12;
        assert!(PolicyCheckpoint::from_json(&bad.to_json()).is_err());
        let mut bad = ckpt;
        bad.format_version = 9;
        assert!(PolicyCheckpoint::from_json(&bad.to_json()).is_err());
    }
}
