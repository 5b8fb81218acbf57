//! Multi-class isolation forests: one forest per known class, scored by the
//! minimum per-class anomaly score.
//!
//! A probe close to some class's cluster receives a low score from that
//! class's forest, so the minimum stays low; a probe far from every cluster
//! scores high everywhere and the minimum stays high. Taking the minimum of
//! the (0, 1) per-forest scores is a strictly monotone reparameterization of
//! minimizing negated decision-function scores, so rankings are unaffected.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::iforest::{ForestParams, IsolationForest};
use crate::linalg::Mat;
use crate::rng::substream;

/// One isolation forest per common class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McifModel {
    pub forests: BTreeMap<String, IsolationForest>,
    /// Stable class order; argmin ties resolve to the earliest entry.
    pub class_order: Vec<String>,
    pub latent_dim: usize,
}

/// A scored, ranked object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedObject {
    pub object_id: String,
    pub score: f64,
    pub nearest_class: String,
    pub label: Option<String>,
}

/// Fit one forest per class on that class's vectors only.
///
/// Per-class seeds derive from the master seed and the class's position in
/// the sorted class order, so perturbing one class's data cannot change any
/// other class's forest. `psi` is clamped to each class's sample count.
pub fn fit_mcif(
    latents_by_class: &BTreeMap<String, Mat>,
    params: ForestParams,
    seed: u64,
) -> Result<McifModel> {
    if latents_by_class.is_empty() {
        return Err(CoreError::EmptyInput);
    }
    let latent_dim = latents_by_class
        .values()
        .next()
        .map(Mat::cols)
        .unwrap_or(0);

    let mut forests = BTreeMap::new();
    let mut class_order = Vec::new();
    for (class_index, (class, data)) in latents_by_class.iter().enumerate() {
        if data.rows() < 2 {
            return Err(CoreError::ClassTooSmall {
                class: class.clone(),
                count: data.rows(),
                min: 2,
            });
        }
        if data.cols() != latent_dim {
            return Err(CoreError::DimensionMismatch {
                expected: latent_dim,
                got: data.cols(),
            });
        }
        let class_seed = substream(seed, "mcif-class", class_index as u64);
        let forest = IsolationForest::fit(data, params, None, class_seed)?;
        forests.insert(class.clone(), forest);
        class_order.push(class.clone());
    }
    Ok(McifModel {
        forests,
        class_order,
        latent_dim,
    })
}

impl McifModel {
    /// Minimum per-class anomaly score and the class attaining it.
    pub fn score(&self, z: &[f64]) -> Result<(f64, &str)> {
        if z.len() != self.latent_dim {
            return Err(CoreError::DimensionMismatch {
                expected: self.latent_dim,
                got: z.len(),
            });
        }
        let mut best: Option<(f64, &str)> = None;
        for class in &self.class_order {
            let s = self.forests[class].score(z);
            match best {
                Some((current, _)) if s >= current => {}
                _ => best = Some((s, class)),
            }
        }
        best.ok_or(CoreError::EmptyInput)
    }

    /// Score a batch and sort descending by score; ties break by object id
    /// so rankings are reproducible.
    pub fn rank<'a, I>(&self, latents: I) -> Result<Vec<RankedObject>>
    where
        I: IntoIterator<Item = (&'a str, &'a [f64], Option<&'a str>)>,
    {
        let mut out = Vec::new();
        for (object_id, z, label) in latents {
            let (score, nearest) = self.score(z)?;
            out.push(RankedObject {
                object_id: object_id.into(),
                score,
                nearest_class: nearest.into(),
                label: label.map(Into::into),
            });
        }
        out.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.object_id.cmp(&b.object_id))
        });
        Ok(out)
    }
}
