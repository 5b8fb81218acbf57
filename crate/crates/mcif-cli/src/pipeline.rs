//! Stage implementations behind the CLI subcommands.
//!
//! Each stage reads its inputs from files, runs the corresponding core
//! operation, writes artifacts under the output directory, prints a
//! one-line summary, and stamps a `*.meta.json` sidecar (config digest,
//! master seed, wall-clock runtime) next to every artifact.
//!
//! Seeds: every randomized stage derives its own stream from the master
//! seed and a stage name, so any subcommand can be re-run in isolation and
//! reproduce byte-identical outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use mcif_core::audit::AuditTrail;
use mcif_core::data::{
    make_split, preprocess, FeatureVector, LightCurve, Standardizer, Wavelengths,
};
use mcif_core::encoder::{
    self, LabeledSet, ModelInput, NetworkConfig, OwnedInput,
};
use mcif_core::eval::{
    self, latent_sweep, one_class_out_protocol, representative_eval, single_iforest_baseline,
    DetectorKind, OneClassOutConfig, PopulationSpec, ScoredInput,
};
use mcif_core::linalg::Mat;
use mcif_core::mcif::{fit_mcif, McifModel, RankedObject};
use mcif_core::realtime::{self, median_curves, TimelineParams};
use mcif_core::rng::{self, substream};
use mcif_core::synth;

use crate::config::{RunConfig, DEFAULT_ANOMALOUS};
use crate::csvio::{self, LatentRow};
use crate::modelio::{self, DatasetManifest, SplitFile};

/// Execution context shared by all stages.
pub struct RunCtx {
    pub config: RunConfig,
    pub digest: String,
    pub out: PathBuf,
}

impl RunCtx {
    pub fn new(config: RunConfig, out: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&out)
            .with_context(|| format!("create output directory {}", out.display()))?;
        let digest = config.digest();
        Ok(Self {
            config,
            digest,
            out,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn stamp(&self, artifact: &Path, runtime: f64) -> Result<()> {
        modelio::write_meta(artifact, &self.digest, self.config.seed, runtime)
    }

    fn wavelengths(&self) -> Wavelengths {
        self.config.dataset.wavelengths()
    }
}

fn summary(stage: &str, detail: &str, started: Instant) {
    println!("{stage}: {detail} ({:.2}s)", started.elapsed().as_secs_f64());
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn simulate(ctx: &RunCtx, scale: f64) -> Result<()> {
    let started = Instant::now();
    let population = synth::default_population(scale, substream(ctx.config.seed, "simulate", 0))
        .map_err(anyhow::Error::msg)?;
    let curves = synth::generate(&population).map_err(anyhow::Error::msg)?;
    let n_rows: usize = curves.iter().map(|c| c.points.len()).sum();

    let data_path = ctx.path("dataset.csv");
    csvio::write_light_curves(&data_path, &curves)?;
    ctx.stamp(&data_path, started.elapsed().as_secs_f64())?;

    let manifest = DatasetManifest {
        anomalous_classes: population
            .anomalous_classes()
            .map(str::to_string)
            .collect(),
        population,
        n_objects: curves.len(),
        n_rows,
    };
    modelio::save_manifest(
        &ctx.path("dataset.manifest.json"),
        &ctx.digest,
        ctx.config.seed,
        &manifest,
    )?;
    summary(
        "simulate",
        &format!(
            "{} objects, {n_rows} rows -> {}",
            curves.len(),
            data_path.display()
        ),
        started,
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Resolve the anomalous class set: explicit config, else the dataset
/// manifest sidecar, else the default five.
pub fn resolve_anomalous(ctx: &RunCtx, data_path: &Path) -> BTreeSet<String> {
    if let Some(classes) = &ctx.config.dataset.anomalous_classes {
        return classes.iter().cloned().collect();
    }
    let manifest_path = modelio::meta_sibling(data_path, "manifest.json");
    if let Ok(manifest) = modelio::load_manifest(&manifest_path) {
        return manifest.anomalous_classes.into_iter().collect();
    }
    DEFAULT_ANOMALOUS.iter().map(|s| s.to_string()).collect()
}

fn labels_of(curves: &[LightCurve]) -> Result<Vec<String>> {
    curves
        .iter()
        .map(|lc| {
            lc.label
                .clone()
                .ok_or_else(|| anyhow::anyhow!("object `{}` has no label", lc.object_id))
        })
        .collect()
}

fn network_config(ctx: &RunCtx, kind: encoder::InputKind, input_dim: usize) -> NetworkConfig {
    let net = &ctx.config.network;
    NetworkConfig {
        input_kind: kind,
        input_dim,
        recurrent_units: net.recurrent_units,
        recurrent_layers: net.recurrent_layers,
        feature_hidden: net.feature_hidden,
        latent_dim: net.latent_dim,
        n_classes: 0, // set by the caller once classes are known
        context_dim: match kind {
            encoder::InputKind::Sequence => 4,
            encoder::InputKind::Features => 0,
        },
        epochs: net.epochs,
        learning_rate: net.learning_rate,
        batch_size: net.batch_size,
        seed: substream(ctx.config.seed, "encoder", 0),
    }
}

/// Train the sequence-path classifier from a light-curve CSV. Writes
/// `encoder.json`, `split.json`, `training_log.csv`, and appends to
/// `audit.json`.
pub fn train_sequences(ctx: &RunCtx, data_path: &Path) -> Result<()> {
    let started = Instant::now();
    let (curves, stats) = csvio::load_light_curves(data_path)?;
    if stats.rows_dropped > 0 || stats.objects_dropped > 0 {
        eprintln!(
            "warning: dropped {} rows (non-positive flux_err) and {} empty objects",
            stats.rows_dropped, stats.objects_dropped
        );
    }
    let anomalous = resolve_anomalous(ctx, data_path);
    let labels = labels_of(&curves)?;
    let split = make_split(
        &labels,
        ctx.config.dataset.fractions,
        &anomalous,
        substream(ctx.config.seed, "split", 0),
    )
    .map_err(anyhow::Error::msg)?;

    let wl = ctx.wavelengths();
    let n_t = ctx.config.dataset.n_t;
    let to_items = |indices: &[usize]| -> Vec<(String, String, OwnedInput)> {
        indices
            .iter()
            .map(|&i| {
                let lc = &curves[i];
                (
                    lc.object_id.clone(),
                    labels[i].clone(),
                    OwnedInput::Sequence(preprocess(lc, n_t, &wl)),
                )
            })
            .collect()
    };
    let train_set =
        LabeledSet::for_training(to_items(&split.train), &anomalous).map_err(anyhow::Error::msg)?;
    let val_set = LabeledSet::with_class_order(
        to_items(&split.validation),
        train_set.class_order.clone(),
    )
    .map_err(anyhow::Error::msg)?;

    let mut net = network_config(ctx, encoder::InputKind::Sequence, 4);
    net.n_classes = train_set.class_order.len();
    let model = encoder::train(&net, &train_set, Some(&val_set)).map_err(anyhow::Error::msg)?;

    let encoder_path = ctx.path("encoder.json");
    modelio::save_encoder(&encoder_path, &ctx.digest, ctx.config.seed, &model)?;
    ctx.stamp(&encoder_path, started.elapsed().as_secs_f64())?;
    csvio::write_training_log(&ctx.path("training_log.csv"), &model.training_log)?;

    let split_file = SplitFile {
        train_ids: split.train.iter().map(|&i| curves[i].object_id.clone()).collect(),
        validation_ids: split
            .validation
            .iter()
            .map(|&i| curves[i].object_id.clone())
            .collect(),
        test_ids: split.test.iter().map(|&i| curves[i].object_id.clone()).collect(),
        anomalous_classes: anomalous,
    };
    modelio::save_split(&ctx.path("split.json"), &ctx.digest, ctx.config.seed, &split_file)?;

    let mut audit = AuditTrail::new();
    audit.record("encoder", train_set.object_ids());
    modelio::append_audit(&ctx.path("audit.json"), &ctx.digest, ctx.config.seed, &audit)?;

    let last = model.training_log.last().expect("at least one epoch");
    summary(
        "train",
        &format!(
            "{} classes, {} train objects, final val acc {:.3} -> {}",
            model.class_order.len(),
            train_set.len(),
            last.val_accuracy.unwrap_or(f64::NAN),
            encoder_path.display()
        ),
        started,
    );
    Ok(())
}

/// Train the feature-path classifier from a feature table. Standardization
/// statistics are fit on training rows only and persisted; the audit trail
/// records which objects they came from.
pub fn train_features(ctx: &RunCtx, features_path: &Path) -> Result<()> {
    let started = Instant::now();
    let features = csvio::load_feature_table(features_path)?;
    let anomalous = resolve_anomalous(ctx, features_path);
    let labels: Vec<String> = features
        .iter()
        .map(|f| {
            f.label
                .clone()
                .ok_or_else(|| anyhow::anyhow!("object `{}` has no label", f.object_id))
        })
        .collect::<Result<_>>()?;
    let split = make_split(
        &labels,
        ctx.config.dataset.fractions,
        &anomalous,
        substream(ctx.config.seed, "split", 0),
    )
    .map_err(anyhow::Error::msg)?;

    let dim = features.first().map(|f| f.values.len()).unwrap_or(0);
    let mut audit = AuditTrail::new();
    let standardizer = standardize_on_train(&features, &split.train, dim, &mut audit)?;

    let to_items = |indices: &[usize]| -> Vec<(String, String, OwnedInput)> {
        indices
            .iter()
            .map(|&i| {
                (
                    features[i].object_id.clone(),
                    labels[i].clone(),
                    OwnedInput::Features {
                        values: standardizer.apply(&features[i].values),
                        context: vec![],
                    },
                )
            })
            .collect()
    };
    let train_set =
        LabeledSet::for_training(to_items(&split.train), &anomalous).map_err(anyhow::Error::msg)?;
    let val_set = LabeledSet::with_class_order(
        to_items(&split.validation),
        train_set.class_order.clone(),
    )
    .map_err(anyhow::Error::msg)?;

    let mut net = network_config(ctx, encoder::InputKind::Features, dim);
    net.n_classes = train_set.class_order.len();
    let model = encoder::train(&net, &train_set, Some(&val_set)).map_err(anyhow::Error::msg)?;
    audit.record("encoder", train_set.object_ids());

    let encoder_path = ctx.path("encoder.json");
    modelio::save_encoder(&encoder_path, &ctx.digest, ctx.config.seed, &model)?;
    ctx.stamp(&encoder_path, started.elapsed().as_secs_f64())?;
    csvio::write_training_log(&ctx.path("training_log.csv"), &model.training_log)?;
    modelio::save(
        &ctx.path("standardizer.json"),
        "mcif-standardizer/1",
        &ctx.digest,
        ctx.config.seed,
        &standardizer,
    )?;

    let split_file = SplitFile {
        train_ids: split
            .train
            .iter()
            .map(|&i| features[i].object_id.clone())
            .collect(),
        validation_ids: split
            .validation
            .iter()
            .map(|&i| features[i].object_id.clone())
            .collect(),
        test_ids: split
            .test
            .iter()
            .map(|&i| features[i].object_id.clone())
            .collect(),
        anomalous_classes: anomalous,
    };
    modelio::save_split(&ctx.path("split.json"), &ctx.digest, ctx.config.seed, &split_file)?;
    modelio::append_audit(&ctx.path("audit.json"), &ctx.digest, ctx.config.seed, &audit)?;

    summary(
        "train",
        &format!(
            "feature path, {} classes, {} train rows -> {}",
            model.class_order.len(),
            train_set.len(),
            encoder_path.display()
        ),
        started,
    );
    Ok(())
}

/// Fit per-column standardization on the training rows only, recording the
/// consumed object ids in the audit trail.
pub fn standardize_on_train(
    features: &[FeatureVector],
    train_indices: &[usize],
    dim: usize,
    audit: &mut AuditTrail,
) -> Result<Standardizer> {
    let train_rows: Vec<&[f64]> = train_indices
        .iter()
        .map(|&i| features[i].values.as_slice())
        .collect();
    let standardizer =
        Standardizer::fit(train_rows.iter().copied(), dim).map_err(anyhow::Error::msg)?;
    audit.record(
        "standardizer",
        train_indices.iter().map(|&i| features[i].object_id.as_str()),
    );
    Ok(standardizer)
}

// ---------------------------------------------------------------------------
// encode
// ---------------------------------------------------------------------------

/// Encode every object in the dataset into the latent space, in file order.
pub fn encode_sequences(ctx: &RunCtx, model_path: &Path, data_path: &Path) -> Result<()> {
    let started = Instant::now();
    let model = modelio::load_encoder(model_path)?;
    warn_on_digest_mismatch(model_path, &ctx.digest);
    let (curves, _) = csvio::load_light_curves(data_path)?;
    let wl = ctx.wavelengths();
    let n_t = ctx.config.dataset.n_t;

    let rows: Vec<LatentRow> = curves
        .par_chunks(64)
        .map(|chunk| -> Result<Vec<LatentRow>> {
            let mut out = Vec::with_capacity(chunk.len());
            let encoded: Vec<_> = chunk.iter().map(|lc| preprocess(lc, n_t, &wl)).collect();
            let latents = model
                .encode(
                    chunk
                        .iter()
                        .zip(&encoded)
                        .map(|(lc, enc)| (lc.object_id.as_str(), ModelInput::Sequence(enc))),
                )
                .map_err(anyhow::Error::msg)?;
            for (lc, latent) in chunk.iter().zip(latents) {
                out.push((latent.object_id, lc.label.clone(), latent.z));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let latents_path = ctx.path("latents.csv");
    csvio::write_latents(&latents_path, &rows)?;
    ctx.stamp(&latents_path, started.elapsed().as_secs_f64())?;
    summary(
        "encode",
        &format!("{} objects -> {}", rows.len(), latents_path.display()),
        started,
    );
    Ok(())
}

/// Encode a feature table through a feature-path model and its stored
/// standardizer.
pub fn encode_features(
    ctx: &RunCtx,
    model_path: &Path,
    standardizer_path: &Path,
    features_path: &Path,
) -> Result<()> {
    let started = Instant::now();
    let model = modelio::load_encoder(model_path)?;
    let standardizer: Standardizer =
        modelio::load(standardizer_path, "mcif-standardizer/1")?.payload;
    let features = csvio::load_feature_table(features_path)?;

    let rows: Vec<LatentRow> = features
        .par_iter()
        .map(|f| -> Result<LatentRow> {
            let values = standardizer.apply(&f.values);
            let (_, z) = model
                .forward(&ModelInput::Features {
                    values: &values,
                    context: &[],
                })
                .map_err(anyhow::Error::msg)?;
            Ok((f.object_id.clone(), f.label.clone(), z))
        })
        .collect::<Result<Vec<_>>>()?;

    let latents_path = ctx.path("latents.csv");
    csvio::write_latents(&latents_path, &rows)?;
    ctx.stamp(&latents_path, started.elapsed().as_secs_f64())?;
    summary(
        "encode",
        &format!("{} feature rows -> {}", rows.len(), latents_path.display()),
        started,
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// fit / score / rank
// ---------------------------------------------------------------------------

fn group_train_latents(
    latents: &[LatentRow],
    split: &SplitFile,
) -> (BTreeMap<String, Mat>, BTreeMap<String, Vec<String>>) {
    let train: BTreeSet<&str> = split.train_set();
    let mut grouped: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    let mut ids: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (id, label, z) in latents {
        let Some(label) = label else { continue };
        if !train.contains(id.as_str()) || split.anomalous_classes.contains(label) {
            continue;
        }
        grouped.entry(label.clone()).or_default().push(z.clone());
        ids.entry(label.clone()).or_default().push(id.clone());
    }
    (
        grouped
            .into_iter()
            .map(|(c, rows)| (c, Mat::from_rows(&rows)))
            .collect(),
        ids,
    )
}

pub fn fit(ctx: &RunCtx, latents_path: &Path, split_path: &Path) -> Result<()> {
    let started = Instant::now();
    let latents = csvio::load_latents(latents_path)?;
    let split = modelio::load_split(split_path)?;
    let (grouped, ids_by_class) = group_train_latents(&latents, &split);
    if grouped.is_empty() {
        bail!("no labeled training latents found for fitting");
    }

    let model = fit_mcif(
        &grouped,
        ctx.config.forest.params(),
        substream(ctx.config.seed, "mcif", 0),
    )
    .map_err(anyhow::Error::msg)?;

    let mcif_path = ctx.path("mcif.json");
    modelio::save_mcif(&mcif_path, &ctx.digest, ctx.config.seed, &model)?;
    ctx.stamp(&mcif_path, started.elapsed().as_secs_f64())?;

    let mut audit = AuditTrail::new();
    for (class, ids) in &ids_by_class {
        audit.record(&format!("forest:{class}"), ids.iter().map(String::as_str));
    }
    modelio::append_audit(&ctx.path("audit.json"), &ctx.digest, ctx.config.seed, &audit)?;

    summary(
        "fit",
        &format!(
            "{} class forests x {} estimators -> {}",
            model.forests.len(),
            ctx.config.forest.n_estimators,
            mcif_path.display()
        ),
        started,
    );
    Ok(())
}

fn score_latents(model: &McifModel, latents: &[LatentRow]) -> Result<Vec<RankedObject>> {
    latents
        .par_iter()
        .map(|(id, label, z)| -> Result<RankedObject> {
            let (score, nearest) = model.score(z).map_err(anyhow::Error::msg)?;
            Ok(RankedObject {
                object_id: id.clone(),
                score,
                nearest_class: nearest.to_string(),
                label: label.clone(),
            })
        })
        .collect()
}

fn select_latents(
    latents: Vec<LatentRow>,
    split: Option<&SplitFile>,
    subset: &str,
) -> Result<Vec<LatentRow>> {
    match (split, subset) {
        (_, "all") => Ok(latents),
        (Some(split), part) => {
            let keep: BTreeSet<&str> = match part {
                "train" => split.train_set(),
                "validation" => split.validation_set(),
                "test" => split.test_set(),
                other => bail!("unknown subset `{other}`"),
            };
            Ok(latents
                .into_iter()
                .filter(|(id, _, _)| keep.contains(id.as_str()))
                .collect())
        }
        (None, other) => bail!("subset `{other}` requires --split"),
    }
}

pub fn score(
    ctx: &RunCtx,
    mcif_path: &Path,
    latents_path: &Path,
    split_path: Option<&Path>,
    subset: &str,
) -> Result<()> {
    let started = Instant::now();
    let model = modelio::load_mcif(mcif_path)?;
    let split = split_path.map(modelio::load_split).transpose()?;
    let latents = select_latents(csvio::load_latents(latents_path)?, split.as_ref(), subset)?;
    let scored = score_latents(&model, &latents)?;
    let path = ctx.path("scores.csv");
    csvio::write_scores(&path, &scored)?;
    ctx.stamp(&path, started.elapsed().as_secs_f64())?;
    summary(
        "score",
        &format!("{} objects -> {}", scored.len(), path.display()),
        started,
    );
    Ok(())
}

pub fn rank(
    ctx: &RunCtx,
    mcif_path: &Path,
    latents_path: &Path,
    split_path: Option<&Path>,
    subset: &str,
) -> Result<()> {
    let started = Instant::now();
    let model = modelio::load_mcif(mcif_path)?;
    let split = split_path.map(modelio::load_split).transpose()?;
    let latents = select_latents(csvio::load_latents(latents_path)?, split.as_ref(), subset)?;
    let ranked = model
        .rank(
            latents
                .iter()
                .map(|(id, label, z)| (id.as_str(), z.as_slice(), label.as_deref())),
        )
        .map_err(anyhow::Error::msg)?;
    let path = ctx.path("ranked.csv");
    csvio::write_ranked(&path, &ranked)?;
    ctx.stamp(&path, started.elapsed().as_secs_f64())?;
    summary(
        "rank",
        &format!("{} objects -> {}", ranked.len(), path.display()),
        started,
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn split_test_latents(
    latents: &[LatentRow],
    split: &SplitFile,
) -> (Vec<ScoredInput>, Vec<ScoredInput>) {
    let test: BTreeSet<&str> = split.test_set();
    let mut commons = Vec::new();
    let mut anomalies = Vec::new();
    for (id, label, z) in latents {
        let Some(label) = label else { continue };
        if !test.contains(id.as_str()) {
            continue;
        }
        let entry = ScoredInput {
            object_id: id.clone(),
            label: label.clone(),
            z: z.clone(),
        };
        if split.anomalous_classes.contains(label) {
            anomalies.push(entry);
        } else {
            commons.push(entry);
        }
    }
    (commons, anomalies)
}

pub fn eval_representative(
    ctx: &RunCtx,
    mcif_path: &Path,
    latents_path: &Path,
    split_path: &Path,
) -> Result<()> {
    let started = Instant::now();
    let model = modelio::load_mcif(mcif_path)?;
    let latents = csvio::load_latents(latents_path)?;
    let split = modelio::load_split(split_path)?;
    let (commons, anomalies) = split_test_latents(&latents, &split);
    if commons.is_empty() || anomalies.is_empty() {
        bail!(
            "representative eval needs both common and anomalous test objects \
             (got {} common, {} anomalous)",
            commons.len(),
            anomalies.len()
        );
    }

    let pop = &ctx.config.population;
    let spec = PopulationSpec::from_ratio(
        commons.len(),
        pop.ratio,
        pop.n_resamples,
        substream(ctx.config.seed, "representative", 0),
    );
    let k_max = ((commons.len() + spec.anomaly_count) as f64 * pop.top_fraction).round() as usize;
    let (mut report, _rankings) =
        representative_eval(&model, &commons, &anomalies, &spec, k_max.max(1))
            .map_err(anyhow::Error::msg)?;
    report.config_digest = ctx.digest.clone();
    report.runtime_seconds = started.elapsed().as_secs_f64();

    let report_path = ctx.path("report.json");
    modelio::save_report(&report_path, &ctx.digest, ctx.config.seed, &report)?;
    ctx.stamp(&report_path, report.runtime_seconds)?;
    let curve_path = ctx.path("recall_curve.csv");
    csvio::write_recall_curve(&curve_path, &report.recall_curve)?;
    ctx.stamp(&curve_path, report.runtime_seconds)?;

    let last = report.recall_curve.last();
    summary(
        "eval",
        &format!(
            "{} resamples of {} anomalies vs {} commons; auroc {:.3}+-{:.3}; \
             top-{} recall {:.3} -> {}",
            spec.n_resamples,
            spec.anomaly_count,
            commons.len(),
            report.auroc_mean,
            report.auroc_std,
            k_max,
            last.map(|p| p.mean_fraction).unwrap_or(0.0),
            report_path.display()
        ),
        started,
    );
    Ok(())
}

pub fn eval_one_class_out(
    ctx: &RunCtx,
    features_path: &Path,
    categories_path: &Path,
    detector: DetectorKind,
) -> Result<()> {
    let started = Instant::now();
    let features = csvio::load_feature_table(features_path)?;
    let text = std::fs::read_to_string(categories_path)
        .with_context(|| format!("read {}", categories_path.display()))?;
    let categories: BTreeMap<String, Vec<String>> = serde_json::from_str(&text)
        .with_context(|| format!("parse {}", categories_path.display()))?;

    let cfg = OneClassOutConfig {
        n_folds: 5,
        forest: ctx.config.forest.params(),
        latent_dim: ctx.config.network.latent_dim,
        epochs: ctx.config.network.epochs,
        seed: substream(ctx.config.seed, "one-class-out", 0),
    };
    let entries =
        one_class_out_protocol(&features, &categories, detector, &cfg).map_err(anyhow::Error::msg)?;

    let json_path = ctx.path("one_class_out.json");
    modelio::save_occ(&json_path, &ctx.digest, ctx.config.seed, &entries)?;
    ctx.stamp(&json_path, started.elapsed().as_secs_f64())?;

    let csv_path = ctx.path("one_class_out.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record([
        "category",
        "anomalous_class",
        "detector",
        "auroc_mean",
        "auroc_std",
        "failed",
        "reference_auroc",
        "reference_std",
    ])?;
    for e in &entries {
        // Published target for this detector/class when the run is on the
        // external comparative dataset; blank otherwise.
        let reference = crate::reference::lookup(detector, &e.anomalous_class);
        w.write_record([
            e.category.as_str(),
            e.anomalous_class.as_str(),
            e.detector.as_str(),
            &format!("{}", e.auroc_mean),
            &format!("{}", e.auroc_std),
            &e.failed.to_string(),
            &reference.map(|(m, _)| format!("{m}")).unwrap_or_default(),
            &reference.map(|(_, s)| format!("{s}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    ctx.stamp(&csv_path, started.elapsed().as_secs_f64())?;

    let failed = entries.iter().filter(|e| e.failed).count();
    summary(
        "eval",
        &format!(
            "one-class-out {} entries ({} failed) with {} -> {}",
            entries.len(),
            failed,
            detector.as_str(),
            json_path.display()
        ),
        started,
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// baseline
// ---------------------------------------------------------------------------

pub fn baseline(
    ctx: &RunCtx,
    latents_path: &Path,
    split_path: &Path,
    mcif_path: Option<&Path>,
) -> Result<()> {
    let started = Instant::now();
    let latents = csvio::load_latents(latents_path)?;
    let split = modelio::load_split(split_path)?;

    // Stack training latents (commons only) with class indices.
    let train: BTreeSet<&str> = split.train_set();
    let mut class_order: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut train_ids: Vec<String> = Vec::new();
    for (id, label, z) in &latents {
        let Some(label) = label else { continue };
        if !train.contains(id.as_str()) || split.anomalous_classes.contains(label) {
            continue;
        }
        let class_index = match class_order.iter().position(|c| c == label) {
            Some(i) => i,
            None => {
                class_order.push(label.clone());
                class_order.len() - 1
            }
        };
        rows.push(z.clone());
        labels.push(class_index);
        train_ids.push(id.clone());
    }
    if rows.is_empty() {
        bail!("no labeled training latents found for the baseline forest");
    }

    let data = Mat::from_rows(&rows);
    let forest = single_iforest_baseline(
        &data,
        &labels,
        class_order.len(),
        ctx.config.forest.baseline_params(),
        substream(ctx.config.seed, "baseline", 0),
    )
    .map_err(anyhow::Error::msg)?;

    let forest_path = ctx.path("baseline_forest.json");
    modelio::save_forest(&forest_path, &ctx.digest, ctx.config.seed, &forest)?;
    ctx.stamp(&forest_path, started.elapsed().as_secs_f64())?;

    let mut audit = AuditTrail::new();
    audit.record("baseline-forest", train_ids.iter().map(String::as_str));
    modelio::append_audit(&ctx.path("audit.json"), &ctx.digest, ctx.config.seed, &audit)?;

    // Score and rank the test subset with the single forest.
    let test: BTreeSet<&str> = split.test_set();
    let mut scored: Vec<RankedObject> = latents
        .iter()
        .filter(|(id, _, _)| test.contains(id.as_str()))
        .map(|(id, label, z)| RankedObject {
            object_id: id.clone(),
            score: forest.score(z),
            nearest_class: String::new(),
            label: label.clone(),
        })
        .collect();
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.object_id.cmp(&b.object_id))
    });
    let ranked_path = ctx.path("baseline_ranked.csv");
    csvio::write_ranked(&ranked_path, &scored)?;
    ctx.stamp(&ranked_path, started.elapsed().as_secs_f64())?;

    // Optional head-to-head AUROC comparison against MCIF on the same
    // test objects.
    if let Some(mcif_path) = mcif_path {
        let mcif = modelio::load_mcif(mcif_path)?;
        let is_anomalous =
            |label: &Option<String>| label.as_deref().is_some_and(|l| split.anomalous_classes.contains(l));
        let baseline_pos: Vec<f64> = scored
            .iter()
            .filter(|r| is_anomalous(&r.label))
            .map(|r| r.score)
            .collect();
        let baseline_neg: Vec<f64> = scored
            .iter()
            .filter(|r| !is_anomalous(&r.label))
            .map(|r| r.score)
            .collect();
        let mut mcif_pos = Vec::new();
        let mut mcif_neg = Vec::new();
        for (id, label, z) in &latents {
            if !test.contains(id.as_str()) {
                continue;
            }
            let s = mcif.score(z).map_err(anyhow::Error::msg)?.0;
            if is_anomalous(label) {
                mcif_pos.push(s);
            } else {
                mcif_neg.push(s);
            }
        }
        if !baseline_pos.is_empty() && !baseline_neg.is_empty() {
            let comparison = serde_json::json!({
                "format": "mcif-baseline-comparison/1",
                "config_digest": ctx.digest,
                "master_seed": ctx.config.seed,
                "baseline_auroc": eval::auroc(&baseline_pos, &baseline_neg).map_err(anyhow::Error::msg)?,
                "mcif_auroc": eval::auroc(&mcif_pos, &mcif_neg).map_err(anyhow::Error::msg)?,
                "n_test_common": baseline_neg.len(),
                "n_test_anomalous": baseline_pos.len(),
            });
            std::fs::write(
                ctx.path("baseline_comparison.json"),
                serde_json::to_string(&comparison)?,
            )?;
        }
    }

    summary(
        "baseline",
        &format!(
            "{} estimators over {} train latents -> {}",
            ctx.config.forest.baseline_estimators,
            rows.len(),
            ranked_path.display()
        ),
        started,
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// realtime
// ---------------------------------------------------------------------------

pub fn run_realtime(
    ctx: &RunCtx,
    model_path: &Path,
    mcif_path: &Path,
    data_path: &Path,
    split_path: Option<&Path>,
) -> Result<()> {
    let started = Instant::now();
    let model = modelio::load_encoder(model_path)?;
    let mcif = modelio::load_mcif(mcif_path)?;
    let (curves, _) = csvio::load_light_curves(data_path)?;
    let split = split_path.map(modelio::load_split).transpose()?;

    // Restrict to the test subset when a split is given, then cap each
    // group (common/anomalous) at the configured sample size.
    let anomalous: BTreeSet<String> = split
        .as_ref()
        .map(|s| s.anomalous_classes.clone())
        .unwrap_or_else(|| DEFAULT_ANOMALOUS.iter().map(|s| s.to_string()).collect());
    let eligible: Vec<&LightCurve> = match &split {
        Some(split) => {
            let test = split.test_set();
            curves
                .iter()
                .filter(|lc| test.contains(lc.object_id.as_str()))
                .collect()
        }
        None => curves.iter().collect(),
    };
    let rt = &ctx.config.realtime;
    let mut commons: Vec<&LightCurve> = eligible
        .iter()
        .copied()
        .filter(|lc| lc.label.as_deref().is_some_and(|l| !anomalous.contains(l)))
        .collect();
    let mut anomalies: Vec<&LightCurve> = eligible
        .iter()
        .copied()
        .filter(|lc| lc.label.as_deref().is_some_and(|l| anomalous.contains(l)))
        .collect();
    let mut stream = rng::rng_from_seed(substream(ctx.config.seed, "realtime-sample", 0));
    rng::shuffle(&mut stream, &mut commons);
    rng::shuffle(&mut stream, &mut anomalies);
    commons.truncate(rt.sample_per_group);
    anomalies.truncate(rt.sample_per_group);

    let params = TimelineParams {
        l_start: rt.l_start,
        l_end: rt.l_end,
        eligibility_window: rt.eligibility_window,
    };
    let wl = ctx.wavelengths();
    let n_t = ctx.config.dataset.n_t;
    let mut selected: Vec<&LightCurve> = commons.into_iter().chain(anomalies).collect();
    selected.sort_by(|a, b| a.object_id.cmp(&b.object_id));

    let timelines = selected
        .par_iter()
        .map(|lc| realtime::timeline(&model, &mcif, lc, n_t, &wl, &params).map_err(anyhow::Error::msg))
        .collect::<Result<Vec<_>>>()?;

    let tl_path = ctx.path("timelines.csv");
    csvio::write_timelines(&tl_path, &timelines)?;
    ctx.stamp(&tl_path, started.elapsed().as_secs_f64())?;

    let medians = median_curves(&timelines);
    let med_path = ctx.path("median_curves.csv");
    csvio::write_median_curves(&med_path, &medians)?;
    ctx.stamp(&med_path, started.elapsed().as_secs_f64())?;

    summary(
        "realtime",
        &format!(
            "{} objects x l in [{}, {}] -> {}",
            timelines.len(),
            rt.l_start,
            rt.l_end,
            tl_path.display()
        ),
        started,
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

pub fn sweep(ctx: &RunCtx, data_path: &Path, dims: &[usize], n_seeds: usize) -> Result<()> {
    let started = Instant::now();
    let (curves, _) = csvio::load_light_curves(data_path)?;
    let anomalous = resolve_anomalous(ctx, data_path);
    let labels = labels_of(&curves)?;
    let split = make_split(
        &labels,
        ctx.config.dataset.fractions,
        &anomalous,
        substream(ctx.config.seed, "split", 0),
    )
    .map_err(anyhow::Error::msg)?;

    let wl = ctx.wavelengths();
    let n_t = ctx.config.dataset.n_t;
    let to_items = |indices: &[usize]| -> Vec<(String, String, OwnedInput)> {
        indices
            .iter()
            .map(|&i| {
                (
                    curves[i].object_id.clone(),
                    labels[i].clone(),
                    OwnedInput::Sequence(preprocess(&curves[i], n_t, &wl)),
                )
            })
            .collect()
    };
    let train_set =
        LabeledSet::for_training(to_items(&split.train), &anomalous).map_err(anyhow::Error::msg)?;
    let mut test_common: Vec<(String, OwnedInput)> = Vec::new();
    let mut test_anomalous: Vec<(String, OwnedInput)> = Vec::new();
    for &i in &split.test {
        let item = (
            curves[i].object_id.clone(),
            OwnedInput::Sequence(preprocess(&curves[i], n_t, &wl)),
        );
        if anomalous.contains(&labels[i]) {
            test_anomalous.push(item);
        } else {
            test_common.push(item);
        }
    }

    let mut base = network_config(ctx, encoder::InputKind::Sequence, 4);
    base.n_classes = train_set.class_order.len();
    let seeds: Vec<u64> = (0..n_seeds as u64).collect();
    let rows = latent_sweep(
        &base,
        &train_set,
        &test_common,
        &test_anomalous,
        ctx.config.forest.params(),
        dims,
        &seeds,
        substream(ctx.config.seed, "sweep", 0),
    )
    .map_err(anyhow::Error::msg)?;

    let csv_path = ctx.path("sweep.csv");
    csvio::write_sweep(&csv_path, &rows)?;
    ctx.stamp(&csv_path, started.elapsed().as_secs_f64())?;
    modelio::save_sweep(&ctx.path("sweep.json"), &ctx.digest, ctx.config.seed, &rows)?;

    for row in &rows {
        println!(
            "  dim {:>4}: auroc {:.3} +- {:.3} over {} runs{}",
            row.dim,
            row.auroc_mean,
            row.auroc_std,
            row.n_runs,
            if row.failures.is_empty() {
                String::new()
            } else {
                format!(" ({} failed)", row.failures.len())
            }
        );
    }
    summary(
        "sweep",
        &format!("{} dims x {} seeds -> {}", dims.len(), n_seeds, csv_path.display()),
        started,
    );
    Ok(())
}

fn warn_on_digest_mismatch(artifact: &Path, digest: &str) {
    if let Ok(doc) = modelio::load::<serde_json::Value>(artifact, modelio::ENCODER_FORMAT) {
        if doc.config_digest != digest {
            eprintln!(
                "warning: {} was produced under config digest {}..., current is {}...",
                artifact.display(),
                &doc.config_digest[..12.min(doc.config_digest.len())],
                &digest[..12]
            );
        }
    }
}
