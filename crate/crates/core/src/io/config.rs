//! JSON engine configuration.
//!
//! Every field is optional; missing ones take the shipped defaults. A
//! `materials_path` replaces the RIR material list with the registry in that
//! file and is resolved relative to the configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{AugmentConfig, BandLimitedConfig, NotchConfig, RirConfig, WidePassConfig};
use crate::error::{param_err, Result};
use crate::room::MaterialRegistry;
use crate::vicinal::DEFAULT_P_KEEP;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub seed: Option<u64>,
    pub p_keep: f64,
    pub materials_path: Option<PathBuf>,
    pub band_limited: BandLimitedConfig,
    pub notch: NotchConfig,
    pub wide_pass: WidePassConfig,
    pub rir: RirConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let a = AugmentConfig::default();
        Self {
            seed: None,
            p_keep: DEFAULT_P_KEEP,
            materials_path: None,
            band_limited: a.band_limited,
            notch: a.notch,
            wide_pass: a.wide_pass,
            rir: a.rir,
        }
    }
}

impl EngineConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        if !(0.0..=1.0).contains(&cfg.p_keep) {
            return param_err(format!("p_keep {} is outside [0, 1]", cfg.p_keep));
        }
        Ok(cfg)
    }

    /// Reads the file and applies `materials_path` if present.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_json_str(&fs::read_to_string(path)?)?;
        if let Some(mp) = &cfg.materials_path {
            let resolved = match path.parent() {
                Some(dir) if mp.is_relative() => dir.join(mp),
                _ => mp.clone(),
            };
            cfg.rir.materials = MaterialRegistry::from_path(&resolved)?.materials();
        }
        Ok(cfg)
    }

    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            band_limited: self.band_limited.clone(),
            notch: self.notch.clone(),
            wide_pass: self.wide_pass.clone(),
            rir: self.rir.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
