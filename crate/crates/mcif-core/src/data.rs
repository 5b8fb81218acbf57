//! Light-curve data model, sequence encoding, splits, and standardization.
//!
//! A [`LightCurve`] is an irregularly sampled multi-passband flux series with
//! per-point uncertainties plus two contextual scalars (host redshift and
//! Milky Way extinction). [`preprocess`] turns one into the fixed-size
//! [`EncodedSequence`] the classifier consumes: rows `[f, eps, t, lambda]`
//! with per-object flux scaling, global time scaling, and a validity mask.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg::Mat;
use crate::math;
use crate::rng::{self, substream};

/// Divisor applied to observation times so the -30..70 day analysis window
/// maps to O(1) inputs.
pub const TIME_SCALE_DAYS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Passband {
    G,
    R,
}

impl Passband {
    pub fn as_str(self) -> &'static str {
        match self {
            Passband::G => "g",
            Passband::R => "r",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        match token {
            "g" | "G" => Some(Passband::G),
            "r" | "R" => Some(Passband::R),
            _ => None,
        }
    }
}

/// Central wavelengths fed to the encoder, one value per passband.
///
/// Defaults are the ZTF g/r central wavelengths in micrometres, divided by
/// 1 um so both values are O(1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wavelengths {
    pub g: f64,
    pub r: f64,
}

impl Default for Wavelengths {
    fn default() -> Self {
        Self {
            g: 0.4767,
            r: 0.6215,
        }
    }
}

impl Wavelengths {
    #[inline]
    pub fn of(&self, band: Passband) -> f64 {
        match band {
            Passband::G => self.g,
            Passband::R => self.r,
        }
    }
}

/// One photometric measurement. `time` is in days relative to trigger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LcPoint {
    pub time: f64,
    pub flux: f64,
    pub flux_err: f64,
    pub passband: Passband,
}

/// An irregularly sampled multi-passband light curve with contextual scalars.
///
/// Invariants (checked by [`LightCurve::validate`]): points sorted
/// nondecreasing in time, every `flux_err > 0`, at least one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightCurve {
    pub object_id: String,
    pub points: Vec<LcPoint>,
    /// Host galaxy spectroscopic redshift; `None` when unavailable.
    pub redshift: Option<f64>,
    /// Milky Way extinction in magnitudes; `None` when unavailable.
    pub mwebv: Option<f64>,
    pub label: Option<String>,
}

impl LightCurve {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(CoreError::EmptyInput);
        }
        for pair in self.points.windows(2) {
            if pair[1].time < pair[0].time {
                return Err(CoreError::Invalid(alloc::format!(
                    "object `{}`: points not sorted by time",
                    self.object_id
                )));
            }
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail the guard
        if let Some(p) = self.points.iter().find(|p| !(p.flux_err > 0.0)) {
            return Err(CoreError::Invalid(alloc::format!(
                "object `{}`: non-positive flux_err at t={}",
                self.object_id,
                p.time
            )));
        }
        Ok(())
    }

    pub fn last_time(&self) -> Option<f64> {
        self.points.last().map(|p| p.time)
    }
}

/// Fixed-size encoder input: an `n_t x 4` matrix of rows
/// `[scaled_flux, scaled_err, scaled_time, wavelength]`, a validity mask,
/// and the contextual vector `[redshift, mwebv, redshift_flag, mwebv_flag]`.
///
/// Masked-out rows are exactly zero. The per-object flux scale factor is
/// retained so raw values can be recovered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedSequence {
    pub object_id: String,
    pub label: Option<String>,
    pub rows: Mat,
    pub mask: Vec<bool>,
    pub context: [f64; 4],
    /// Divisor applied to flux and flux_err (per-object max |flux|).
    pub scale_factor: f64,
    /// True when the object had no usable flux extent and the scale fell
    /// back to 1.0.
    pub degenerate_scale: bool,
}

impl EncodedSequence {
    pub fn mask_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Encode a light curve for the classifier.
///
/// Flux and flux_err are divided by the per-object maximum |flux| over the
/// kept points (so every |f| <= 1 and per-point S/N is preserved); time is
/// divided by [`TIME_SCALE_DAYS`]. When the curve has more than `n_t` points
/// the earliest `n_t` are kept. An empty curve (possible after real-time
/// truncation) yields a fully masked sequence.
pub fn preprocess(lc: &LightCurve, n_t: usize, wavelengths: &Wavelengths) -> EncodedSequence {
    let kept = lc.points.len().min(n_t);
    let points = &lc.points[..kept];

    let max_abs = points
        .iter()
        .map(|p| math::abs(p.flux))
        .fold(0.0_f64, f64::max);
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN flux counts as degenerate
    let degenerate = !(max_abs > 0.0);
    let scale = if degenerate { 1.0 } else { max_abs };

    let mut rows = Mat::zeros(n_t, 4);
    let mut mask = vec![false; n_t];
    for (j, p) in points.iter().enumerate() {
        let row = rows.row_mut(j);
        row[0] = p.flux / scale;
        row[1] = p.flux_err / scale;
        row[2] = p.time / TIME_SCALE_DAYS;
        row[3] = wavelengths.of(p.passband);
        mask[j] = true;
    }

    let context = [
        lc.redshift.unwrap_or(0.0),
        lc.mwebv.unwrap_or(0.0),
        if lc.redshift.is_some() { 1.0 } else { 0.0 },
        if lc.mwebv.is_some() { 1.0 } else { 0.0 },
    ];

    EncodedSequence {
        object_id: lc.object_id.clone(),
        label: lc.label.clone(),
        rows,
        mask,
        context,
        scale_factor: scale,
        degenerate_scale: degenerate,
    }
}

/// A feature-table row: pre-extracted light-curve features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub object_id: String,
    pub values: Vec<f64>,
    pub label: Option<String>,
}

/// Per-column standardization fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    /// Per-column divisor; clamped to 1.0 for zero-variance columns.
    pub scales: Vec<f64>,
}

impl Standardizer {
    /// Fit on the given rows (training rows only, by contract).
    pub fn fit<'a, I>(rows: I, dim: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]> + Clone,
    {
        let mut means = vec![0.0; dim];
        let mut n = 0usize;
        for row in rows.clone() {
            if row.len() != dim {
                return Err(CoreError::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(CoreError::EmptyInput);
        }
        means.iter_mut().for_each(|m| *m /= n as f64);

        let mut vars = vec![0.0; dim];
        for row in rows {
            for ((v, m), x) in vars.iter_mut().zip(&means).zip(row) {
                let d = x - m;
                *v += d * d;
            }
        }
        let scales = vars
            .into_iter()
            .map(|v| {
                let std = math::sqrt(v / n as f64);
                if std > 0.0 {
                    std
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { means, scales })
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.means)
            .zip(&self.scales)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }
}

/// Train/validation/test fractions over the common classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let sum = train + validation + test;
        if math::abs(sum - 1.0) > 1e-9 {
            return Err(CoreError::BadFractions { sum });
        }
        if train < 0.0 || validation < 0.0 || test < 0.0 {
            return Err(CoreError::Invalid("negative split fraction".into()));
        }
        Ok(Self {
            train,
            validation,
            test,
        })
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

/// Disjoint index sets over one dataset. Anomalous classes appear only in
/// `test`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub anomalous_classes: BTreeSet<String>,
}

/// Stratified split over the common classes; every anomalous-class object
/// goes to `test`. Deterministic under `seed`.
///
/// Per common class, counts follow the fractions by largest-remainder
/// rounding (ties resolved train, then validation, then test). A common
/// class with fewer than 3 objects cannot be stratified and is an error.
pub fn make_split(
    labels: &[String],
    fractions: SplitFractions,
    anomalous_classes: &BTreeSet<String>,
    seed: u64,
) -> Result<DatasetSplit> {
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        by_class.entry(label.as_str()).or_default().push(i);
    }

    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();

    for (class_index, (class, mut indices)) in by_class.into_iter().enumerate() {
        if anomalous_classes.contains(class) {
            test.extend(indices);
            continue;
        }
        if indices.len() < 3 {
            return Err(CoreError::ClassTooSmall {
                class: class.into(),
                count: indices.len(),
                min: 3,
            });
        }
        let mut stream = rng::rng_from_seed(substream(seed, "split", class_index as u64));
        rng::shuffle(&mut stream, &mut indices);

        let (n_train, n_val) = allocate(
            indices.len(),
            [fractions.train, fractions.validation, fractions.test],
        );
        train.extend(&indices[..n_train]);
        validation.extend(&indices[n_train..n_train + n_val]);
        test.extend(&indices[n_train + n_val..]);
    }

    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();
    Ok(DatasetSplit {
        train,
        validation,
        test,
        anomalous_classes: anomalous_classes.clone(),
    })
}

/// Largest-remainder allocation of `n` into three parts; returns the first
/// two sizes (the third is the remainder).
fn allocate(n: usize, fractions: [f64; 3]) -> (usize, usize) {
    let ideal: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut base: Vec<usize> = ideal.iter().map(|x| math::floor(*x) as usize).collect();
    let mut leftover = n - base.iter().sum::<usize>();
    // Distribute by descending fractional part; ties fall to the earlier
    // part, i.e. train before validation before test.
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - math::floor(ideal[a]);
        let fb = ideal[b] - math::floor(ideal[b]);
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &part in &order {
        if leftover == 0 {
            break;
        }
        base[part] += 1;
        leftover -= 1;
    }
    (base[0], base[1])
}

/// Guard used at batch-assembly time: no anomalous-class object may appear
/// in a training batch.
pub fn check_no_anomalous<'a>(
    ids_and_labels: impl IntoIterator<Item = (&'a str, &'a str)>,
    anomalous_classes: &BTreeSet<String>,
) -> Result<()> {
    for (id, label) in ids_and_labels {
        if anomalous_classes.contains(label) {
            return Err(CoreError::AnomalousInTraining {
                object_id: id.into(),
                class: label.into(),
            });
        }
    }
    Ok(())
}
