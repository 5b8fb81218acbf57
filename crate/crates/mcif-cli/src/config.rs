//! Run configuration and content digests.
//!
//! One JSON document drives a whole run; a SHA-256 digest of its canonical
//! serialization (declaration-ordered fields) plus the master seed is
//! stamped into every artifact for provenance.

use std::path::Path;

use anyhow::{Context, Result};
use mcif_core::data::SplitFractions;
use mcif_core::iforest::ForestParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_ANOMALOUS: [&str; 5] = ["CaRT", "KNe", "PISN", "ILOT", "uLens-BSR"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetBlock {
    /// Sequence capacity; the full-scale setting is 656.
    pub n_t: usize,
    pub fractions: SplitFractions,
    /// Classes quarantined to the test set. `None` falls back to the
    /// dataset manifest, then to the default five.
    pub anomalous_classes: Option<Vec<String>>,
    pub wavelength_g: f64,
    pub wavelength_r: f64,
}

impl Default for DatasetBlock {
    fn default() -> Self {
        let wl = mcif_core::data::Wavelengths::default();
        Self {
            n_t: 64,
            fractions: SplitFractions::default(),
            anomalous_classes: None,
            wavelength_g: wl.g,
            wavelength_r: wl.r,
        }
    }
}

impl DatasetBlock {
    pub fn wavelengths(&self) -> mcif_core::data::Wavelengths {
        mcif_core::data::Wavelengths {
            g: self.wavelength_g,
            r: self.wavelength_r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkBlock {
    pub recurrent_units: usize,
    pub recurrent_layers: usize,
    pub feature_hidden: usize,
    /// Desk-scale default; the full-scale setting is 100.
    pub latent_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for NetworkBlock {
    fn default() -> Self {
        Self {
            recurrent_units: 32,
            recurrent_layers: 2,
            feature_hidden: 64,
            latent_dim: 32,
            epochs: 40,
            learning_rate: 1e-3,
            batch_size: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestBlock {
    pub n_estimators: usize,
    pub psi: usize,
    /// Estimators for the single-forest baseline (the MCIF total).
    pub baseline_estimators: usize,
}

impl Default for ForestBlock {
    fn default() -> Self {
        Self {
            n_estimators: 200,
            psi: 256,
            baseline_estimators: 2400,
        }
    }
}

impl ForestBlock {
    pub fn params(&self) -> ForestParams {
        ForestParams {
            n_estimators: self.n_estimators,
            psi: self.psi,
        }
    }

    pub fn baseline_params(&self) -> ForestParams {
        ForestParams {
            n_estimators: self.baseline_estimators,
            psi: self.psi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationBlock {
    pub scale: f64,
    /// Common-to-anomalous rate for representative evaluation.
    pub ratio: f64,
    pub n_resamples: usize,
    /// Follow-up budget as a fraction of the evaluated set.
    pub top_fraction: f64,
}

impl Default for PopulationBlock {
    fn default() -> Self {
        Self {
            scale: 0.01,
            ratio: 220.0,
            n_resamples: 50,
            top_fraction: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RealtimeBlock {
    pub l_start: i64,
    pub l_end: i64,
    pub eligibility_window: f64,
    /// Cap on objects per group (common/anomalous) in the realtime run.
    pub sample_per_group: usize,
}

impl Default for RealtimeBlock {
    fn default() -> Self {
        Self {
            l_start: -30,
            l_end: 70,
            eligibility_window: 5.0,
            sample_per_group: 2000,
        }
    }
}

/// The single declarative run configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetBlock,
    pub network: NetworkBlock,
    pub forest: ForestBlock,
    pub population: PopulationBlock,
    pub realtime: RealtimeBlock,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parse config {}", path.display()))
    }

    /// Stable content hash over the canonicalized config (including the
    /// master seed).
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(64);
        for b in hash {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }
}
