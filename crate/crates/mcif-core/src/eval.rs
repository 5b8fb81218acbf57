//! Evaluation protocols: AUROC, recall@K, representative-population
//! resampling, the one-class-out comparison, the weighted single-forest
//! baseline, and the latent-size sweep.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureVector, Standardizer};
use crate::encoder::{self, LabeledSet, NetworkConfig, OwnedInput};
use crate::error::{CoreError, Result};
use crate::iforest::{inverse_frequency_weights, ForestParams, IsolationForest};
use crate::linalg::Mat;
use crate::math;
use crate::mcif::{fit_mcif, McifModel, RankedObject};
use crate::rng::{self, substream};

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Probability that a random positive outranks a random negative, ties
/// counted half. Rank-sum (Mann-Whitney) with midranks, O(n log n); agrees
/// exactly with the all-pairs count.
pub fn auroc(scores_pos: &[f64], scores_neg: &[f64]) -> Result<f64> {
    if scores_pos.is_empty() {
        return Err(CoreError::EmptyScores { which: "positive" });
    }
    if scores_neg.is_empty() {
        return Err(CoreError::EmptyScores { which: "negative" });
    }
    let np = scores_pos.len();
    let nn = scores_neg.len();
    let mut all: Vec<(f64, bool)> = Vec::with_capacity(np + nn);
    all.extend(scores_pos.iter().map(|&s| (s, true)));
    all.extend(scores_neg.iter().map(|&s| (s, false)));
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // Ranks are 1-based; the tied group [i, j] shares the midrank.
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        let pos_in_group = all[i..=j].iter().filter(|(_, p)| *p).count();
        rank_sum_pos += midrank * pos_in_group as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (np * (np + 1)) as f64 / 2.0;
    Ok(u / (np as f64 * nn as f64))
}

/// One point of a recall curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallPoint {
    pub k: usize,
    pub recovered: usize,
    pub fraction: f64,
}

/// Anomalies recovered in the top K of a ranking, for K = 1..=k_max.
/// The fraction denominator is the number of anomalies present in the
/// ranked list.
pub fn recall_at_k<'a>(
    ranked_ids: impl IntoIterator<Item = &'a str>,
    anomaly_ids: &BTreeSet<String>,
    k_max: usize,
) -> Vec<RecallPoint> {
    let flags: Vec<bool> = ranked_ids
        .into_iter()
        .map(|id| anomaly_ids.contains(id))
        .collect();
    let total = flags.iter().filter(|&&f| f).count().max(1);
    let mut recovered = 0usize;
    let mut curve = Vec::with_capacity(k_max.min(flags.len()));
    for (idx, flag) in flags.iter().enumerate().take(k_max) {
        if *flag {
            recovered += 1;
        }
        curve.push(RecallPoint {
            k: idx + 1,
            recovered,
            fraction: recovered as f64 / total as f64,
        });
    }
    curve
}

// ---------------------------------------------------------------------------
// Representative population
// ---------------------------------------------------------------------------

/// Downsampling parameters for the representative population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub common_count: usize,
    /// Anomalies per resample; `from_ratio` sets `round(common / ratio)`.
    pub anomaly_count: usize,
    /// Common-to-anomalous rate in nature (roughly 220).
    pub ratio: f64,
    pub n_resamples: usize,
    pub seed: u64,
}

impl PopulationSpec {
    pub fn from_ratio(common_count: usize, ratio: f64, n_resamples: usize, seed: u64) -> Self {
        Self {
            common_count,
            anomaly_count: math::round(common_count as f64 / ratio) as usize,
            ratio,
            n_resamples,
            seed,
        }
    }
}

/// One resample: the full common test set plus this anomaly subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resample {
    pub anomaly_ids: Vec<String>,
}

/// Draw `n_resamples` anomaly subsets. Per-class counts are multinomial
/// (uniform over the anomalous classes); objects are drawn without
/// replacement within a class. Deterministic under `spec.seed`.
pub fn representative_resample(
    anomalies_by_class: &BTreeMap<String, Vec<String>>,
    spec: &PopulationSpec,
) -> Result<Vec<Resample>> {
    if anomalies_by_class.is_empty() {
        return Err(CoreError::EmptyInput);
    }
    let classes: Vec<&String> = anomalies_by_class.keys().collect();
    let mut resamples = Vec::with_capacity(spec.n_resamples);
    for r in 0..spec.n_resamples {
        let mut stream = rng::rng_from_seed(substream(spec.seed, "resample", r as u64));
        let mut counts = vec![0usize; classes.len()];
        for _ in 0..spec.anomaly_count {
            let c = rand::Rng::gen_range(&mut stream, 0..classes.len());
            counts[c] += 1;
        }
        let mut ids = Vec::with_capacity(spec.anomaly_count);
        for (c, &count) in counts.iter().enumerate() {
            let pool = &anomalies_by_class[classes[c]];
            if pool.len() < count {
                return Err(CoreError::AnomalyPoolTooSmall {
                    class: classes[c].clone(),
                    need: count,
                    have: pool.len(),
                });
            }
            for idx in rng::sample_without_replacement(&mut stream, pool.len(), count) {
                ids.push(pool[idx].clone());
            }
        }
        ids.sort_unstable();
        resamples.push(Resample { anomaly_ids: ids });
    }
    Ok(resamples)
}

/// Aggregated recall-curve point across resamples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallAggregate {
    pub k: usize,
    pub mean_recovered: f64,
    pub std_recovered: f64,
    pub mean_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecall {
    /// Mean objects of this class per resample.
    pub mean_sampled: f64,
    /// Mean of those recovered within the top `k_max`.
    pub mean_recovered: f64,
    pub mean_fraction: f64,
}

/// Evaluation summary. `runtime_seconds` is process metadata, not a result;
/// it is excluded from the serialized form so reports from identical runs
/// are byte-identical, and is persisted in the run's meta sidecar instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc_mean: f64,
    pub auroc_std: f64,
    pub recall_curve: Vec<RecallAggregate>,
    pub per_class: BTreeMap<String, ClassRecall>,
    pub config_digest: String,
    #[serde(skip)]
    pub runtime_seconds: f64,
}

/// A labeled latent vector ready for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredInput {
    pub object_id: String,
    pub label: String,
    pub z: Vec<f64>,
}

/// Representative-population evaluation: rank every resample, aggregate the
/// AUROC and the recall curve, and report per-class recovery at `k_max`.
pub fn representative_eval(
    model: &McifModel,
    common_test: &[ScoredInput],
    anomaly_test: &[ScoredInput],
    spec: &PopulationSpec,
    k_max: usize,
) -> Result<(EvalReport, Vec<Vec<RankedObject>>)> {
    let mut anomalies_by_class: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut anomaly_lookup: BTreeMap<&str, &ScoredInput> = BTreeMap::new();
    for a in anomaly_test {
        anomalies_by_class
            .entry(a.label.clone())
            .or_default()
            .push(a.object_id.clone());
        anomaly_lookup.insert(&a.object_id, a);
    }
    for ids in anomalies_by_class.values_mut() {
        ids.sort_unstable();
    }
    let resamples = representative_resample(&anomalies_by_class, spec)?;

    // Common scores are fixed across resamples.
    let common_scored: Vec<(String, f64, String, Option<String>)> = {
        let mut v = Vec::with_capacity(common_test.len());
        for c in common_test {
            let (s, nearest) = model.score(&c.z)?;
            v.push((
                c.object_id.clone(),
                s,
                nearest.to_string(),
                Some(c.label.clone()),
            ));
        }
        v
    };

    let mut aurocs = Vec::with_capacity(resamples.len());
    let mut recovered_by_k: Vec<Vec<usize>> = vec![Vec::new(); k_max];
    let mut fraction_by_k: Vec<Vec<f64>> = vec![Vec::new(); k_max];
    let mut per_class_sampled: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut per_class_recovered: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut rankings = Vec::with_capacity(resamples.len());

    for resample in &resamples {
        let mut entries: Vec<RankedObject> = common_scored
            .iter()
            .map(|(id, s, nearest, label)| RankedObject {
                object_id: id.clone(),
                score: *s,
                nearest_class: nearest.clone(),
                label: label.clone(),
            })
            .collect();
        let mut pos_scores = Vec::with_capacity(resample.anomaly_ids.len());
        for id in &resample.anomaly_ids {
            let a = anomaly_lookup[id.as_str()];
            let (s, nearest) = model.score(&a.z)?;
            pos_scores.push(s);
            entries.push(RankedObject {
                object_id: a.object_id.clone(),
                score: s,
                nearest_class: nearest.to_string(),
                label: Some(a.label.clone()),
            });
        }
        entries.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.object_id.cmp(&b.object_id))
        });

        let neg_scores: Vec<f64> = common_scored.iter().map(|(_, s, _, _)| *s).collect();
        aurocs.push(auroc(&pos_scores, &neg_scores)?);

        let anomaly_set: BTreeSet<String> = resample.anomaly_ids.iter().cloned().collect();
        let curve = recall_at_k(
            entries.iter().map(|e| e.object_id.as_str()),
            &anomaly_set,
            k_max,
        );
        for (point, (rec, frac)) in curve
            .iter()
            .zip(recovered_by_k.iter_mut().zip(fraction_by_k.iter_mut()))
        {
            rec.push(point.recovered);
            frac.push(point.fraction);
        }

        // Per-class bookkeeping at k_max.
        let top: BTreeSet<&str> = entries
            .iter()
            .take(k_max)
            .map(|e| e.object_id.as_str())
            .collect();
        for (class, pool) in &anomalies_by_class {
            let sampled: Vec<&String> = resample
                .anomaly_ids
                .iter()
                .filter(|id| pool.binary_search(id).is_ok())
                .collect();
            let recovered = sampled
                .iter()
                .filter(|id| top.contains(id.as_str()))
                .count();
            per_class_sampled
                .entry(class.clone())
                .or_default()
                .push(sampled.len());
            per_class_recovered
                .entry(class.clone())
                .or_default()
                .push(recovered);
        }
        rankings.push(entries);
    }

    let (auroc_mean, auroc_std) = mean_std(&aurocs);
    let recall_curve: Vec<RecallAggregate> = recovered_by_k
        .iter()
        .zip(&fraction_by_k)
        .enumerate()
        .filter(|(_, (rec, _))| !rec.is_empty())
        .map(|(i, (rec, frac))| {
            let as_f: Vec<f64> = rec.iter().map(|&r| r as f64).collect();
            let (mean_recovered, std_recovered) = mean_std(&as_f);
            RecallAggregate {
                k: i + 1,
                mean_recovered,
                std_recovered,
                mean_fraction: frac.iter().sum::<f64>() / frac.len() as f64,
            }
        })
        .collect();

    let per_class = per_class_sampled
        .iter()
        .map(|(class, sampled)| {
            let recovered = &per_class_recovered[class];
            let mean_sampled = sampled.iter().sum::<usize>() as f64 / sampled.len() as f64;
            let mean_recovered = recovered.iter().sum::<usize>() as f64 / recovered.len() as f64;
            let mean_fraction = if mean_sampled > 0.0 {
                mean_recovered / mean_sampled
            } else {
                0.0
            };
            (
                class.clone(),
                ClassRecall {
                    mean_sampled,
                    mean_recovered,
                    mean_fraction,
                },
            )
        })
        .collect();

    Ok((
        EvalReport {
            auroc_mean,
            auroc_std,
            recall_curve,
            per_class,
            config_digest: String::new(),
            runtime_seconds: 0.0,
        },
        rankings,
    ))
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, math::sqrt(var))
}

// ---------------------------------------------------------------------------
// Single-forest baseline
// ---------------------------------------------------------------------------

/// One forest over all latents with inverse-frequency sample weights: the
/// baseline MCIF is compared against. The conventional estimator count is
/// the MCIF total (classes x per-class estimators), 2400 at defaults.
pub fn single_iforest_baseline(
    latents: &Mat,
    class_labels: &[usize],
    n_classes: usize,
    params: ForestParams,
    seed: u64,
) -> Result<IsolationForest> {
    if latents.rows() != class_labels.len() {
        return Err(CoreError::DimensionMismatch {
            expected: latents.rows(),
            got: class_labels.len(),
        });
    }
    let weights = inverse_frequency_weights(class_labels, n_classes);
    IsolationForest::fit(latents, params, Some(&weights), seed)
}

// ---------------------------------------------------------------------------
// One-class-out comparison protocol
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    /// Feature-path classifier, single weighted forest on its latents.
    ClassifierIForest,
    /// Feature-path classifier, per-class forests on its latents.
    ClassifierMcif,
    /// Per-class forests directly on standardized features.
    McifRaw,
    /// Single weighted forest directly on standardized features.
    IForestRaw,
}

impl DetectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::ClassifierIForest => "classifier+iforest",
            DetectorKind::ClassifierMcif => "classifier+mcif",
            DetectorKind::McifRaw => "mcif-raw",
            DetectorKind::IForestRaw => "iforest-raw",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        match token {
            "classifier+iforest" => Some(Self::ClassifierIForest),
            "classifier+mcif" => Some(Self::ClassifierMcif),
            "mcif-raw" => Some(Self::McifRaw),
            "iforest-raw" => Some(Self::IForestRaw),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneClassOutConfig {
    pub n_folds: usize,
    pub forest: ForestParams,
    /// Latent width of the feature-path classifier.
    pub latent_dim: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for OneClassOutConfig {
    fn default() -> Self {
        Self {
            n_folds: 5,
            forest: ForestParams::default(),
            latent_dim: 32,
            epochs: 40,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneClassOutEntry {
    pub category: String,
    pub anomalous_class: String,
    pub detector: DetectorKind,
    pub fold_aurocs: Vec<f64>,
    pub auroc_mean: f64,
    pub auroc_std: f64,
    pub failed: bool,
    pub error: Option<String>,
}

/// For each class of each category: treat that class as anomalous, train the
/// detector on the remaining classes of the category, and report the AUROC
/// mean and std across `n_folds` test folds. A detector failure marks the
/// entry failed and the protocol continues.
pub fn one_class_out_protocol(
    features: &[FeatureVector],
    categories: &BTreeMap<String, Vec<String>>,
    detector: DetectorKind,
    cfg: &OneClassOutConfig,
) -> Result<Vec<OneClassOutEntry>> {
    let mut entries = Vec::new();
    for (cat_index, (category, classes)) in categories.iter().enumerate() {
        if classes.len() < 2 {
            return Err(CoreError::CategoryTooSmall {
                category: category.clone(),
                count: classes.len(),
            });
        }
        for (class_index, anomalous_class) in classes.iter().enumerate() {
            let run_seed = substream(
                cfg.seed,
                "one-class-out",
                (cat_index * 1000 + class_index) as u64,
            );
            let entry = match one_class_out_run(
                features,
                classes,
                anomalous_class,
                detector,
                cfg,
                run_seed,
            ) {
                Ok(fold_aurocs) => {
                    let (auroc_mean, auroc_std) = mean_std(&fold_aurocs);
                    OneClassOutEntry {
                        category: category.clone(),
                        anomalous_class: anomalous_class.clone(),
                        detector,
                        fold_aurocs,
                        auroc_mean,
                        auroc_std,
                        failed: false,
                        error: None,
                    }
                }
                Err(err) => OneClassOutEntry {
                    category: category.clone(),
                    anomalous_class: anomalous_class.clone(),
                    detector,
                    fold_aurocs: Vec::new(),
                    auroc_mean: 0.0,
                    auroc_std: 0.0,
                    failed: true,
                    error: Some(alloc::format!("{err}")),
                },
            };
            entries.push(entry);
        }
    }
    Ok(entries)
}

fn one_class_out_run(
    features: &[FeatureVector],
    classes: &[String],
    anomalous_class: &str,
    detector: DetectorKind,
    cfg: &OneClassOutConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let common_classes: Vec<&String> = classes.iter().filter(|c| *c != anomalous_class).collect();
    let commons: Vec<&FeatureVector> = features
        .iter()
        .filter(|f| {
            f.label
                .as_deref()
                .is_some_and(|l| common_classes.iter().any(|c| c.as_str() == l))
        })
        .collect();
    let anomalies: Vec<&FeatureVector> = features
        .iter()
        .filter(|f| f.label.as_deref() == Some(anomalous_class))
        .collect();
    if commons.is_empty() || anomalies.is_empty() {
        return Err(CoreError::EmptyInput);
    }
    let dim = commons[0].values.len();

    // Stratified fold assignment over the common objects.
    let mut fold_of = vec![0usize; commons.len()];
    {
        let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, f) in commons.iter().enumerate() {
            by_class
                .entry(f.label.as_deref().unwrap())
                .or_default()
                .push(i);
        }
        for (ci, (_, mut idxs)) in by_class.into_iter().enumerate() {
            let mut stream = rng::rng_from_seed(substream(seed, "fold-shuffle", ci as u64));
            rng::shuffle(&mut stream, &mut idxs);
            for (pos, i) in idxs.into_iter().enumerate() {
                fold_of[i] = pos % cfg.n_folds;
            }
        }
    }

    let mut fold_aurocs = Vec::with_capacity(cfg.n_folds);
    for fold in 0..cfg.n_folds {
        let train_rows: Vec<&FeatureVector> = commons
            .iter()
            .enumerate()
            .filter(|(i, _)| fold_of[*i] != fold)
            .map(|(_, f)| *f)
            .collect();
        let test_rows: Vec<&FeatureVector> = commons
            .iter()
            .enumerate()
            .filter(|(i, _)| fold_of[*i] == fold)
            .map(|(_, f)| *f)
            .collect();
        if train_rows.is_empty() || test_rows.is_empty() {
            return Err(CoreError::EmptyInput);
        }

        // Standardization statistics come from training rows only.
        let std = Standardizer::fit(train_rows.iter().map(|f| f.values.as_slice()), dim)?;
        let fold_seed = substream(seed, "fold", fold as u64);

        let score_fn = build_feature_detector(&train_rows, &std, detector, cfg, fold_seed)?;
        let neg: Vec<f64> = test_rows
            .iter()
            .map(|f| score_fn.score(&std.apply(&f.values)))
            .collect::<Result<_>>()?;
        let pos: Vec<f64> = anomalies
            .iter()
            .map(|f| score_fn.score(&std.apply(&f.values)))
            .collect::<Result<_>>()?;
        fold_aurocs.push(auroc(&pos, &neg)?);
    }
    Ok(fold_aurocs)
}

/// A fitted anomaly scorer over standardized feature vectors.
pub enum FeatureDetector {
    Mcif(McifModel),
    Single(IsolationForest),
    EncoderMcif(encoder::EncoderClassifier, McifModel),
    EncoderSingle(encoder::EncoderClassifier, IsolationForest),
}

impl FeatureDetector {
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        match self {
            FeatureDetector::Mcif(m) => Ok(m.score(x)?.0),
            FeatureDetector::Single(f) => Ok(f.score(x)),
            FeatureDetector::EncoderMcif(enc, m) => {
                let (_, z) = enc.forward(&encoder::ModelInput::Features {
                    values: x,
                    context: &[],
                })?;
                Ok(m.score(&z)?.0)
            }
            FeatureDetector::EncoderSingle(enc, f) => {
                let (_, z) = enc.forward(&encoder::ModelInput::Features {
                    values: x,
                    context: &[],
                })?;
                Ok(f.score(&z))
            }
        }
    }
}

fn build_feature_detector(
    train_rows: &[&FeatureVector],
    std: &Standardizer,
    detector: DetectorKind,
    cfg: &OneClassOutConfig,
    seed: u64,
) -> Result<FeatureDetector> {
    let dim = std.dim();
    let grouped = || -> BTreeMap<String, Mat> {
        let mut by_class: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
        for f in train_rows {
            by_class
                .entry(f.label.clone().unwrap_or_default())
                .or_default()
                .push(std.apply(&f.values));
        }
        by_class
            .into_iter()
            .map(|(c, rows)| (c, Mat::from_rows(&rows)))
            .collect()
    };
    let n_common = train_rows
        .iter()
        .filter_map(|f| f.label.as_deref())
        .collect::<BTreeSet<_>>()
        .len();

    match detector {
        DetectorKind::McifRaw => Ok(FeatureDetector::Mcif(fit_mcif(
            &grouped(),
            cfg.forest,
            seed,
        )?)),
        DetectorKind::IForestRaw => {
            let (data, labels, n_classes) = stacked(train_rows, std);
            let params = ForestParams {
                n_estimators: cfg.forest.n_estimators * n_common,
                psi: cfg.forest.psi,
            };
            Ok(FeatureDetector::Single(single_iforest_baseline(
                &data, &labels, n_classes, params, seed,
            )?))
        }
        DetectorKind::ClassifierMcif | DetectorKind::ClassifierIForest => {
            let items: Vec<(String, String, OwnedInput)> = train_rows
                .iter()
                .map(|f| {
                    (
                        f.object_id.clone(),
                        f.label.clone().unwrap_or_default(),
                        OwnedInput::Features {
                            values: std.apply(&f.values),
                            context: vec![],
                        },
                    )
                })
                .collect();
            let set = LabeledSet::for_training(items, &BTreeSet::new())?;
            let mut net =
                NetworkConfig::features(dim, set.class_order.len(), cfg.latent_dim, seed);
            net.epochs = cfg.epochs;
            let model = encoder::train(&net, &set, None)?;

            // Encode the training rows into the latent space.
            let mut latents_by_class: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
            let mut flat: Vec<Vec<f64>> = Vec::with_capacity(set.len());
            let mut labels: Vec<usize> = Vec::with_capacity(set.len());
            for s in &set.samples {
                let (_, z) = model.forward(&s.input.as_ref())?;
                latents_by_class
                    .entry(set.class_order[s.label_index].clone())
                    .or_default()
                    .push(z.clone());
                flat.push(z);
                labels.push(s.label_index);
            }

            match detector {
                DetectorKind::ClassifierMcif => {
                    let grouped: BTreeMap<String, Mat> = latents_by_class
                        .into_iter()
                        .map(|(c, rows)| (c, Mat::from_rows(&rows)))
                        .collect();
                    Ok(FeatureDetector::EncoderMcif(
                        model,
                        fit_mcif(&grouped, cfg.forest, seed)?,
                    ))
                }
                _ => {
                    let data = Mat::from_rows(&flat);
                    let params = ForestParams {
                        n_estimators: cfg.forest.n_estimators * set.class_order.len(),
                        psi: cfg.forest.psi,
                    };
                    let forest = single_iforest_baseline(
                        &data,
                        &labels,
                        set.class_order.len(),
                        params,
                        seed,
                    )?;
                    Ok(FeatureDetector::EncoderSingle(model, forest))
                }
            }
        }
    }
}

fn stacked(train_rows: &[&FeatureVector], std: &Standardizer) -> (Mat, Vec<usize>, usize) {
    let class_order: Vec<String> = train_rows
        .iter()
        .filter_map(|f| f.label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let rows: Vec<Vec<f64>> = train_rows.iter().map(|f| std.apply(&f.values)).collect();
    let labels: Vec<usize> = train_rows
        .iter()
        .map(|f| {
            class_order
                .iter()
                .position(|c| Some(c.as_str()) == f.label.as_deref())
                .unwrap_or(0)
        })
        .collect();
    (Mat::from_rows(&rows), labels, class_order.len())
}

// ---------------------------------------------------------------------------
// Latent-size sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dim: usize,
    pub auroc_mean: f64,
    pub auroc_std: f64,
    pub n_runs: usize,
    pub failures: Vec<String>,
}

/// Train one encoder per `(dim, seed)`, fit MCIF on its training latents,
/// and report the AUROC of anomalous-vs-common test scores. Single-run
/// failures are recorded and the sweep continues.
#[allow(clippy::too_many_arguments)]
pub fn latent_sweep(
    base: &NetworkConfig,
    train_set: &LabeledSet,
    test_common: &[(String, OwnedInput)],
    test_anomalous: &[(String, OwnedInput)],
    forest: ForestParams,
    dims: &[usize],
    seeds: &[u64],
    master_seed: u64,
) -> Result<Vec<SweepRow>> {
    if dims.is_empty() {
        return Err(CoreError::EmptyInput);
    }
    let mut rows = Vec::with_capacity(dims.len());
    for &dim in dims {
        let mut aurocs = Vec::new();
        let mut failures = Vec::new();
        for (si, &seed) in seeds.iter().enumerate() {
            let mut cfg = base.clone();
            cfg.latent_dim = dim;
            cfg.seed = substream(master_seed, "sweep", (dim * 10_000 + si) as u64) ^ seed;
            match sweep_cell(&cfg, train_set, test_common, test_anomalous, forest) {
                Ok(a) => aurocs.push(a),
                Err(err) => failures.push(alloc::format!("dim {dim} seed {seed}: {err}")),
            }
        }
        let (auroc_mean, auroc_std) = mean_std(&aurocs);
        rows.push(SweepRow {
            dim,
            auroc_mean,
            auroc_std,
            n_runs: aurocs.len(),
            failures,
        });
    }
    Ok(rows)
}

fn sweep_cell(
    cfg: &NetworkConfig,
    train_set: &LabeledSet,
    test_common: &[(String, OwnedInput)],
    test_anomalous: &[(String, OwnedInput)],
    forest: ForestParams,
) -> Result<f64> {
    let model = encoder::train(cfg, train_set, None)?;
    let mut latents_by_class: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for s in &train_set.samples {
        let (_, z) = model.forward(&s.input.as_ref())?;
        latents_by_class
            .entry(train_set.class_order[s.label_index].clone())
            .or_default()
            .push(z);
    }
    let grouped: BTreeMap<String, Mat> = latents_by_class
        .into_iter()
        .map(|(c, rows)| (c, Mat::from_rows(&rows)))
        .collect();
    let mcif = fit_mcif(&grouped, forest, cfg.seed)?;

    let mut neg = Vec::with_capacity(test_common.len());
    for (_, input) in test_common {
        let (_, z) = model.forward(&input.as_ref())?;
        neg.push(mcif.score(&z)?.0);
    }
    let mut pos = Vec::with_capacity(test_anomalous.len());
    for (_, input) in test_anomalous {
        let (_, z) = model.forward(&input.as_ref())?;
        pos.push(mcif.score(&z)?.0);
    }
    auroc(&pos, &neg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    // -- AUROC ---------------------------------------------------------

    /// O(n^2) all-pairs oracle with half credit for ties.
    fn auroc_pairwise(pos: &[f64], neg: &[f64]) -> f64 {
        let mut wins = 0.0;
        for p in pos {
            for n in neg {
                if p > n {
                    wins += 1.0;
                } else if p == n {
                    wins += 0.5;
                }
            }
        }
        wins / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn auroc_trivial_cases() {
        assert_eq!(auroc(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.5], &[0.5]).unwrap(), 0.5);
        assert!(matches!(
            auroc(&[], &[0.1]),
            Err(CoreError::EmptyScores { which: "positive" })
        ));
        assert!(matches!(
            auroc(&[0.1], &[]),
            Err(CoreError::EmptyScores { which: "negative" })
        ));
    }

    #[test]
    fn auroc_matches_pairwise_oracle_exactly() {
        let mut stream = rng_from_seed(99);
        for case in 0..1000 {
            let np = 1 + stream.gen_range(0..12);
            let nn = 1 + stream.gen_range(0..12);
            // Coarse grid of scores forces plenty of ties.
            let pos: Vec<f64> = (0..np)
                .map(|_| stream.gen_range(0..8) as f64 / 8.0)
                .collect();
            let neg: Vec<f64> = (0..nn)
                .map(|_| stream.gen_range(0..8) as f64 / 8.0)
                .collect();
            let fast = auroc(&pos, &neg).unwrap();
            let slow = auroc_pairwise(&pos, &neg);
            assert_eq!(fast, slow, "case {case}: {pos:?} vs {neg:?}");
        }
    }

    #[test]
    fn auroc_complement_and_monotone_invariance() {
        let mut stream = rng_from_seed(7);
        let pos: Vec<f64> = (0..50).map(|_| stream.gen::<f64>()).collect();
        let neg: Vec<f64> = (0..70).map(|_| stream.gen::<f64>()).collect();
        let a = auroc(&pos, &neg).unwrap();
        let b = auroc(&neg, &pos).unwrap();
        assert_eq!(a + b, 1.0);

        // Strictly increasing transform leaves the value unchanged.
        let epos: Vec<f64> = pos.iter().map(|&x| math::exp(x)).collect();
        let eneg: Vec<f64> = neg.iter().map(|&x| math::exp(x)).collect();
        assert_eq!(auroc(&epos, &eneg).unwrap(), a);
    }

    // -- recall@K ------------------------------------------------------

    #[test]
    fn recall_reaches_one_when_anomalies_lead() {
        let ranked = ["a1", "a2", "n1", "n2", "n3"];
        let anomalies: BTreeSet<String> = ["a1", "a2"].iter().map(|s| s.to_string()).collect();
        let curve = recall_at_k(ranked.iter().copied(), &anomalies, 5);
        assert_eq!(curve[1].recovered, 2);
        assert_eq!(curve[1].fraction, 1.0);
        assert_eq!(curve[4].recovered, 2);
        // Nondecreasing and bounded by min(K, |anomalies|).
        for w in curve.windows(2) {
            assert!(w[1].recovered >= w[0].recovered);
        }
        for p in &curve {
            assert!(p.recovered <= p.k.min(2));
        }
    }

    #[test]
    fn random_ranking_matches_hypergeometric_expectation() {
        // N objects, A anomalies, look at top K under random order. The
        // recovered count is hypergeometric with mean K*A/N; the mean over
        // 200 shuffles must sit within 3 sigma of it.
        let n = 200usize;
        let a = 20usize;
        let k = 30usize;
        let ids: Vec<String> = (0..n).map(|i| alloc::format!("o{i:03}")).collect();
        let anomalies: BTreeSet<String> = ids.iter().take(a).cloned().collect();

        let shuffles = 200;
        let mut total = 0usize;
        for s in 0..shuffles {
            let mut order: Vec<usize> = (0..n).collect();
            let mut stream = rng_from_seed(3000 + s);
            rng::shuffle(&mut stream, &mut order);
            let ranked: Vec<&str> = order.iter().map(|&i| ids[i].as_str()).collect();
            let curve = recall_at_k(ranked.iter().copied(), &anomalies, k);
            total += curve[k - 1].recovered;
        }
        let mean = total as f64 / shuffles as f64;
        let expectation = k as f64 * a as f64 / n as f64;
        let frac = a as f64 / n as f64;
        let var = k as f64 * frac * (1.0 - frac) * (n - k) as f64 / (n - 1) as f64;
        let sigma_of_mean = math::sqrt(var / shuffles as f64);
        assert!(
            math::abs(mean - expectation) < 3.0 * sigma_of_mean,
            "mean {mean}, expected {expectation} +- {sigma_of_mean}"
        );
    }

    // -- representative resampling --------------------------------------

    fn anomaly_pools() -> BTreeMap<String, Vec<String>> {
        let classes = ["KNe", "ILOT", "CaRT", "PISN", "uLens"];
        classes
            .iter()
            .map(|c| {
                (
                    c.to_string(),
                    (0..40).map(|i| alloc::format!("{c}-{i:02}")).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn ratio_implies_anomaly_count() {
        let spec = PopulationSpec::from_ratio(12_040, 220.0, 50, 1);
        assert_eq!(spec.anomaly_count, 55);
        assert_eq!(spec.n_resamples, 50);
    }

    #[test]
    fn resamples_are_distinct_and_deterministic() {
        let pools = anomaly_pools();
        let spec = PopulationSpec {
            common_count: 1000,
            anomaly_count: 25,
            ratio: 40.0,
            n_resamples: 50,
            seed: 4,
        };
        let a = representative_resample(&pools, &spec).unwrap();
        let b = representative_resample(&pools, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        let distinct: BTreeSet<&Vec<String>> = a.iter().map(|r| &r.anomaly_ids).collect();
        assert!(
            distinct.len() > 45,
            "only {} distinct resamples",
            distinct.len()
        );
        for r in &a {
            assert_eq!(r.anomaly_ids.len(), 25);
            let unique: BTreeSet<&String> = r.anomaly_ids.iter().collect();
            assert_eq!(unique.len(), 25);
        }
    }

    #[test]
    fn resample_rejects_small_pool() {
        let mut pools = anomaly_pools();
        pools.insert("rare".into(), vec!["rare-0".into()]);
        let spec = PopulationSpec {
            common_count: 1000,
            anomaly_count: 30,
            ratio: 33.0,
            n_resamples: 10,
            seed: 9,
        };
        let err = representative_resample(&pools, &spec).unwrap_err();
        assert!(matches!(err, CoreError::AnomalyPoolTooSmall { .. }));
    }

    // -- baseline ------------------------------------------------------

    #[test]
    fn single_class_baseline_equals_unweighted_fit() {
        let mut stream = rng_from_seed(12);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![stream.gen::<f64>(), stream.gen::<f64>()])
            .collect();
        let data = Mat::from_rows(&rows);
        let labels = vec![0usize; 60];
        let params = ForestParams {
            n_estimators: 20,
            psi: 32,
        };
        let weighted = single_iforest_baseline(&data, &labels, 1, params, 77).unwrap();
        let plain = IsolationForest::fit(&data, params, None, 77).unwrap();
        assert_eq!(weighted, plain);
    }

    #[test]
    fn estimator_budget_matches_mcif_total() {
        // 12 classes x 200 estimators per class.
        assert_eq!(12 * ForestParams::default().n_estimators, 2400);
    }

    // -- one-class-out ---------------------------------------------------

    fn clustered_features(
        classes: &[(&str, [f64; 2])],
        n_per_class: usize,
        spread: f64,
        seed: u64,
    ) -> Vec<FeatureVector> {
        let mut stream = rng_from_seed(seed);
        let mut out = Vec::new();
        for (class, center) in classes {
            for i in 0..n_per_class {
                out.push(FeatureVector {
                    object_id: alloc::format!("{class}-{i:03}"),
                    values: center
                        .iter()
                        .map(|c| c + spread * rng::standard_normal(&mut stream))
                        .collect(),
                    label: Some(class.to_string()),
                });
            }
        }
        out
    }

    #[test]
    fn held_out_cluster_is_detected() {
        // Three separated clusters; hold one out, train on the other two.
        let features = clustered_features(
            &[("A", [0.0, 0.0]), ("B", [6.0, 0.0]), ("C", [0.0, 6.0])],
            60,
            0.4,
            42,
        );
        let categories: BTreeMap<String, Vec<String>> = [(
            "all".to_string(),
            vec!["A".to_string(), "B".to_string(), "C".to_string()],
        )]
        .into_iter()
        .collect();
        let cfg = OneClassOutConfig {
            n_folds: 5,
            forest: ForestParams {
                n_estimators: 50,
                psi: 64,
            },
            latent_dim: 8,
            epochs: 30,
            seed: 5,
        };
        let entries = one_class_out_protocol(
            &features,
            &categories,
            DetectorKind::ClassifierIForest,
            &cfg,
        )
        .unwrap();
        assert_eq!(entries.len(), 3);
        for e in &entries {
            assert!(!e.failed, "{:?}", e.error);
            assert_eq!(e.fold_aurocs.len(), 5);
            assert!(
                e.auroc_mean > 0.9,
                "class {} auroc {}",
                e.anomalous_class,
                e.auroc_mean
            );
        }
    }

    #[test]
    fn detector_trains_only_on_remaining_classes() {
        // With A anomalous, a raw-MCIF detector over {B, C} must have
        // exactly those forests.
        let features = clustered_features(
            &[("A", [0.0, 0.0]), ("B", [5.0, 0.0]), ("C", [0.0, 5.0])],
            30,
            0.3,
            51,
        );
        let commons: Vec<&FeatureVector> = features
            .iter()
            .filter(|f| f.label.as_deref() != Some("A"))
            .collect();
        let std = Standardizer::fit(commons.iter().map(|f| f.values.as_slice()), 2).unwrap();
        let det = build_feature_detector(
            &commons,
            &std,
            DetectorKind::McifRaw,
            &OneClassOutConfig::default(),
            3,
        )
        .unwrap();
        match det {
            FeatureDetector::Mcif(m) => {
                assert_eq!(m.class_order, vec!["B".to_string(), "C".to_string()]);
            }
            _ => panic!("wrong detector"),
        }
    }

    #[test]
    fn failed_detector_is_reported_not_fatal() {
        // A category where one class has a single object: MCIF fitting
        // breaks whenever that class is common, but the protocol finishes.
        let mut features =
            clustered_features(&[("A", [0.0, 0.0]), ("B", [5.0, 0.0])], 20, 0.3, 8);
        features.push(FeatureVector {
            object_id: "C-000".into(),
            values: vec![9.0, 9.0],
            label: Some("C".into()),
        });
        let categories: BTreeMap<String, Vec<String>> = [(
            "all".to_string(),
            vec!["A".to_string(), "B".to_string(), "C".to_string()],
        )]
        .into_iter()
        .collect();
        let cfg = OneClassOutConfig {
            n_folds: 5,
            forest: ForestParams {
                n_estimators: 10,
                psi: 16,
            },
            latent_dim: 4,
            epochs: 2,
            seed: 2,
        };
        let entries =
            one_class_out_protocol(&features, &categories, DetectorKind::McifRaw, &cfg).unwrap();
        assert_eq!(entries.len(), 3);
        let failed = entries.iter().filter(|e| e.failed).count();
        assert!(failed >= 1);
        assert!(entries.iter().any(|e| !e.failed));
    }

    // -- representative eval end-to-end -----------------------------------

    #[test]
    fn representative_eval_recovers_separated_anomalies() {
        // Latent geometry directly: one common cluster, distant anomalies.
        let mut stream = rng_from_seed(31);
        let common_train = Mat::from_rows(
            &(0..200)
                .map(|_| {
                    vec![
                        0.4 * rng::standard_normal(&mut stream),
                        0.4 * rng::standard_normal(&mut stream),
                    ]
                })
                .collect::<Vec<_>>(),
        );
        let mut by_class = BTreeMap::new();
        by_class.insert("common".to_string(), common_train);
        let model = fit_mcif(&by_class, ForestParams::default(), 6).unwrap();

        let common_test: Vec<ScoredInput> = (0..300)
            .map(|i| ScoredInput {
                object_id: alloc::format!("c{i:03}"),
                label: "common".into(),
                z: vec![
                    0.4 * rng::standard_normal(&mut stream),
                    0.4 * rng::standard_normal(&mut stream),
                ],
            })
            .collect();
        let anomaly_test: Vec<ScoredInput> = (0..40)
            .map(|i| ScoredInput {
                object_id: alloc::format!("a{i:02}"),
                label: if i % 2 == 0 { "kne" } else { "pisn" }.into(),
                z: vec![
                    6.0 + 0.3 * rng::standard_normal(&mut stream),
                    -6.0 + 0.3 * rng::standard_normal(&mut stream),
                ],
            })
            .collect();

        let spec = PopulationSpec {
            common_count: 300,
            anomaly_count: 10,
            ratio: 30.0,
            n_resamples: 20,
            seed: 77,
        };
        let k_max = 31; // top ~10%
        let (report, rankings) =
            representative_eval(&model, &common_test, &anomaly_test, &spec, k_max).unwrap();
        assert_eq!(rankings.len(), 20);
        assert!(report.auroc_mean > 0.95, "auroc {}", report.auroc_mean);
        let last = report.recall_curve.last().unwrap();
        assert!(last.mean_fraction > 0.9, "recall {}", last.mean_fraction);
        // Curve is nondecreasing in K.
        for w in report.recall_curve.windows(2) {
            assert!(w[1].mean_recovered >= w[0].mean_recovered - 1e-12);
        }
        assert_eq!(report.per_class.len(), 2);
    }

    // -- sweep shape -------------------------------------------------------

    #[test]
    fn latent_sweep_emits_one_row_per_dim() {
        let mut stream = rng_from_seed(60);
        let mut items = Vec::new();
        for class in 0..2 {
            for i in 0..30 {
                let c = class as f64 * 4.0;
                items.push((
                    alloc::format!("t{class}-{i}"),
                    alloc::format!("class{class}"),
                    OwnedInput::Features {
                        values: vec![
                            c + 0.3 * rng::standard_normal(&mut stream),
                            -c + 0.3 * rng::standard_normal(&mut stream),
                        ],
                        context: vec![],
                    },
                ));
            }
        }
        let train = LabeledSet::for_training(items, &BTreeSet::new()).unwrap();
        let test_common: Vec<(String, OwnedInput)> = (0..20)
            .map(|i| {
                (
                    alloc::format!("tc{i}"),
                    OwnedInput::Features {
                        values: vec![
                            0.3 * rng::standard_normal(&mut stream),
                            0.3 * rng::standard_normal(&mut stream),
                        ],
                        context: vec![],
                    },
                )
            })
            .collect();
        let test_anomalous: Vec<(String, OwnedInput)> = (0..10)
            .map(|i| {
                (
                    alloc::format!("ta{i}"),
                    OwnedInput::Features {
                        values: vec![10.0, 10.0],
                        context: vec![],
                    },
                )
            })
            .collect();

        let mut base = NetworkConfig::features(2, 2, 8, 0);
        base.epochs = 5;
        let forest = ForestParams {
            n_estimators: 25,
            psi: 32,
        };
        let rows = latent_sweep(
            &base,
            &train,
            &test_common,
            &test_anomalous,
            forest,
            &[2, 4, 8],
            &[1, 2],
            99,
        )
        .unwrap();
        assert_eq!(rows.len(), 3);
        for row in &rows {
            assert_eq!(row.n_runs, 2);
            assert!(row.failures.is_empty());
            assert!(row.auroc_std >= 0.0);
        }

        // Determinism: same call, same table.
        let again = latent_sweep(
            &base,
            &train,
            &test_common,
            &test_anomalous,
            forest,
            &[2, 4, 8],
            &[1, 2],
            99,
        )
        .unwrap();
        assert_eq!(rows, again);
    }
}
