//! Versioned JSON persistence for models, splits, reports, and sidecars.
//!
//! Every document carries a format tag, the run's config digest, and the
//! master seed. Serialization is deterministic (BTree-ordered maps,
//! declaration-ordered structs), so equal runs produce byte-identical
//! files. Wall-clock metadata never goes into canonical artifacts; it
//! lives in `*.meta.json` sidecars.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mcif_core::audit::AuditTrail;
use mcif_core::encoder::EncoderClassifier;
use mcif_core::eval::{EvalReport, OneClassOutEntry, SweepRow};
use mcif_core::iforest::IsolationForest;
use mcif_core::mcif::McifModel;
use mcif_core::synth::PopulationConfig;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

pub const ENCODER_FORMAT: &str = "mcif-encoder/1";
pub const MCIF_FORMAT: &str = "mcif-model/1";
pub const FOREST_FORMAT: &str = "mcif-forest/1";
pub const SPLIT_FORMAT: &str = "mcif-split/1";
pub const REPORT_FORMAT: &str = "mcif-report/1";
pub const OCC_FORMAT: &str = "mcif-one-class-out/1";
pub const SWEEP_FORMAT: &str = "mcif-sweep/1";
pub const MANIFEST_FORMAT: &str = "mcif-dataset-manifest/1";
pub const AUDIT_FORMAT: &str = "mcif-audit/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub format: String,
    pub config_digest: String,
    pub master_seed: u64,
    pub payload: T,
}

pub fn save<T: Serialize>(
    path: &Path,
    format: &str,
    digest: &str,
    master_seed: u64,
    payload: &T,
) -> Result<()> {
    let doc = Versioned {
        format: format.to_string(),
        config_digest: digest.to_string(),
        master_seed,
        payload,
    };
    let text = serde_json::to_string(&doc)?;
    std::fs::write(path, text).with_context(|| format!("write {}", path.display()))?;
    Ok(())
}

pub fn load<T: DeserializeOwned>(path: &Path, expected_format: &str) -> Result<Versioned<T>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
    let doc: Versioned<T> =
        serde_json::from_str(&text).with_context(|| format!("parse {}", path.display()))?;
    if doc.format != expected_format {
        bail!(
            "{}: format `{}` does not match expected `{expected_format}`",
            path.display(),
            doc.format
        );
    }
    Ok(doc)
}

/// Object-id membership of a split, plus the quarantined classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub anomalous_classes: BTreeSet<String>,
}

impl SplitFile {
    pub fn train_set(&self) -> BTreeSet<&str> {
        self.train_ids.iter().map(String::as_str).collect()
    }

    pub fn validation_set(&self) -> BTreeSet<&str> {
        self.validation_ids.iter().map(String::as_str).collect()
    }

    pub fn test_set(&self) -> BTreeSet<&str> {
        self.test_ids.iter().map(String::as_str).collect()
    }
}

/// Sidecar for a dataset CSV: the generator config echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub population: PopulationConfig,
    pub anomalous_classes: Vec<String>,
    pub n_objects: usize,
    pub n_rows: usize,
}

/// Wall-clock metadata sidecar; the one place runtimes are recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaSidecar {
    pub format: String,
    pub config_digest: String,
    pub master_seed: u64,
    pub runtime_seconds: f64,
}

pub fn meta_path(artifact: &Path) -> PathBuf {
    let mut name = artifact
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(".meta.json");
    artifact.with_file_name(name)
}

/// Sibling file sharing the artifact's stem: `dataset.csv` with suffix
/// `manifest.json` becomes `dataset.manifest.json`.
pub fn meta_sibling(artifact: &Path, suffix: &str) -> PathBuf {
    let stem = artifact
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    artifact.with_file_name(format!("{stem}.{suffix}"))
}

pub fn write_meta(artifact: &Path, digest: &str, master_seed: u64, runtime_seconds: f64) -> Result<()> {
    let meta = MetaSidecar {
        format: "mcif-meta/1".into(),
        config_digest: digest.to_string(),
        master_seed,
        runtime_seconds,
    };
    let path = meta_path(artifact);
    std::fs::write(&path, serde_json::to_string(&meta)?)
        .with_context(|| format!("write {}", path.display()))?;
    Ok(())
}

pub fn save_encoder(path: &Path, digest: &str, seed: u64, model: &EncoderClassifier) -> Result<()> {
    save(path, ENCODER_FORMAT, digest, seed, model)
}

pub fn load_encoder(path: &Path) -> Result<EncoderClassifier> {
    Ok(load::<EncoderClassifier>(path, ENCODER_FORMAT)?.payload)
}

pub fn save_mcif(path: &Path, digest: &str, seed: u64, model: &McifModel) -> Result<()> {
    save(path, MCIF_FORMAT, digest, seed, model)
}

pub fn load_mcif(path: &Path) -> Result<McifModel> {
    Ok(load::<McifModel>(path, MCIF_FORMAT)?.payload)
}

pub fn save_forest(path: &Path, digest: &str, seed: u64, forest: &IsolationForest) -> Result<()> {
    save(path, FOREST_FORMAT, digest, seed, forest)
}

pub fn load_forest(path: &Path) -> Result<IsolationForest> {
    Ok(load::<IsolationForest>(path, FOREST_FORMAT)?.payload)
}

pub fn save_split(path: &Path, digest: &str, seed: u64, split: &SplitFile) -> Result<()> {
    save(path, SPLIT_FORMAT, digest, seed, split)
}

pub fn load_split(path: &Path) -> Result<SplitFile> {
    Ok(load::<SplitFile>(path, SPLIT_FORMAT)?.payload)
}

pub fn save_report(path: &Path, digest: &str, seed: u64, report: &EvalReport) -> Result<()> {
    save(path, REPORT_FORMAT, digest, seed, report)
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    Ok(load::<EvalReport>(path, REPORT_FORMAT)?.payload)
}

pub fn save_occ(path: &Path, digest: &str, seed: u64, entries: &[OneClassOutEntry]) -> Result<()> {
    save(path, OCC_FORMAT, digest, seed, &entries.to_vec())
}

pub fn save_sweep(path: &Path, digest: &str, seed: u64, rows: &[SweepRow]) -> Result<()> {
    save(path, SWEEP_FORMAT, digest, seed, &rows.to_vec())
}

pub fn save_manifest(path: &Path, digest: &str, seed: u64, manifest: &DatasetManifest) -> Result<()> {
    save(path, MANIFEST_FORMAT, digest, seed, manifest)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    Ok(load::<DatasetManifest>(path, MANIFEST_FORMAT)?.payload)
}

/// Merge new audit entries into an existing audit file (or create it).
pub fn append_audit(path: &Path, digest: &str, seed: u64, new_entries: &AuditTrail) -> Result<()> {
    let mut trail = if path.exists() {
        load::<AuditTrail>(path, AUDIT_FORMAT)?.payload
    } else {
        AuditTrail::new()
    };
    trail.merge(new_entries);
    save(path, AUDIT_FORMAT, digest, seed, &trail)
}

pub fn load_audit(path: &Path) -> Result<AuditTrail> {
    Ok(load::<AuditTrail>(path, AUDIT_FORMAT)?.payload)
}
