//! Training configuration file.

use std::path::Path;

use pli_core::augment::AugmentationSpec;
use pli_core::contrastive::{EncoderConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Patch geometry of the pair sampler; mode and radius come from the
/// command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairSettings {
    pub patch_side: usize,
    pub max_retries: usize,
    pub seed: u64,
}

impl Default for PairSettings {
    fn default() -> Self {
        Self {
            patch_side: 48,
            max_retries: 16,
            seed: 0,
        }
    }
}

/// Sections `[train]`, `[encoder]`, `[augmentation]` and `[pairs]`; every
/// key is optional. Defaults suit 5.2 µm maps with 32 px crops.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub train: TrainConfig,
    pub encoder: EncoderConfig,
    pub augmentation: AugmentationSpec,
    pub pairs: PairSettings,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            encoder: EncoderConfig::default(),
            augmentation: AugmentationSpec {
                crop: 32,
                ..Default::default()
            },
            pairs: PairSettings::default(),
        }
    }
}

impl TrainSettings {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let s: Self = toml::from_str(text).map_err(|e| CliError::usage(format!("training config: {e}")))?;
        s.train.validate()?;
        s.encoder.validate()?;
        s.augmentation.validate()?;
        Ok(s)
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("cannot read {}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let s = TrainSettings::from_toml("[train]\nsteps = 7\n[pairs]\npatch_side = 40\n").unwrap();
        assert_eq!(s.train.steps, 7);
        assert_eq!(s.pairs.patch_side, 40);
        assert_eq!(s.augmentation.crop, 32);
        assert_eq!(s.encoder, EncoderConfig::default());
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let e = TrainSettings::from_toml("[trian]\nsteps = 7\n").unwrap_err();
        assert_eq!(e.exit_code(), crate::error::EXIT_USAGE);
    }
}
