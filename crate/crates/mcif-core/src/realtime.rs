//! Real-time analysis: anomaly scores on truncated light curves at 1-day
//! steps.
//!
//! At each day offset `l` the curve is cut to the observations strictly
//! before `l` and rescored; an object is eligible at `l` only while its last
//! observation is strictly newer than `l - eligibility_window`, so scores
//! stop once a transient has faded out of view. Both boundary conventions
//! (strict `<` for truncation, strict `>` for eligibility) are deliberate
//! and tested; flipping them changes per-day counts, not conclusions.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{preprocess, LightCurve, Wavelengths};
use crate::encoder::{EncoderClassifier, ModelInput};
use crate::error::Result;
use crate::mcif::McifModel;

/// Per-object anomaly-score timeline on the integer day grid
/// `l_start..=l_end`. `scores[i]` is `None` where the object was ineligible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTimeline {
    pub object_id: String,
    pub label: Option<String>,
    pub l_start: i64,
    pub scores: Vec<Option<f64>>,
}

impl ScoreTimeline {
    pub fn days(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.scores.len()).map(move |i| self.l_start + i as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineParams {
    pub l_start: i64,
    pub l_end: i64,
    /// Days after the last observation during which an object stays
    /// scoreable.
    pub eligibility_window: f64,
}

impl Default for TimelineParams {
    fn default() -> Self {
        Self {
            l_start: -30,
            l_end: 70,
            eligibility_window: 5.0,
        }
    }
}

/// Keep exactly the points with `time < l`; contextual metadata is
/// preserved. A point at `time == l` is excluded.
pub fn truncate(lc: &LightCurve, l: f64) -> LightCurve {
    LightCurve {
        object_id: lc.object_id.clone(),
        points: lc.points.iter().filter(|p| p.time < l).copied().collect(),
        redshift: lc.redshift,
        mwebv: lc.mwebv,
        label: lc.label.clone(),
    }
}

/// Score the curve at every eligible day with an arbitrary scorer. The
/// scorer sees the truncated curve, which may be empty at early `l`.
pub fn timeline_with<F>(lc: &LightCurve, params: &TimelineParams, mut score: F) -> Result<ScoreTimeline>
where
    F: FnMut(&LightCurve) -> Result<f64>,
{
    let last_obs = lc.last_time();
    let mut scores = Vec::with_capacity((params.l_end - params.l_start + 1) as usize);
    for l in params.l_start..=params.l_end {
        let eligible = match last_obs {
            Some(t_last) => t_last > l as f64 - params.eligibility_window,
            None => false,
        };
        if eligible {
            scores.push(Some(score(&truncate(lc, l as f64))?));
        } else {
            scores.push(None);
        }
    }
    Ok(ScoreTimeline {
        object_id: lc.object_id.clone(),
        label: lc.label.clone(),
        l_start: params.l_start,
        scores,
    })
}

/// The production scorer: encode the truncated curve and take the MCIF
/// minimum-across-classes score.
pub fn timeline(
    encoder: &EncoderClassifier,
    mcif: &McifModel,
    lc: &LightCurve,
    n_t: usize,
    wavelengths: &Wavelengths,
    params: &TimelineParams,
) -> Result<ScoreTimeline> {
    timeline_with(lc, params, |truncated| {
        let enc = preprocess(truncated, n_t, wavelengths);
        let (_, z) = encoder.forward(&ModelInput::Sequence(&enc))?;
        Ok(mcif.score(&z)?.0)
    })
}

/// One point of a per-class median curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianPoint {
    pub l: i64,
    pub median: f64,
    /// Eligible objects contributing at this day.
    pub count: usize,
}

/// Per-class median score at each day, over the eligible objects only.
/// Days with no eligible object are omitted. Timelines must share a grid.
pub fn median_curves(timelines: &[ScoreTimeline]) -> BTreeMap<String, Vec<MedianPoint>> {
    let mut by_class: BTreeMap<String, Vec<&ScoreTimeline>> = BTreeMap::new();
    for tl in timelines {
        let class = tl.label.clone().unwrap_or_else(|| "unlabeled".into());
        by_class.entry(class).or_default().push(tl);
    }

    let mut out = BTreeMap::new();
    for (class, group) in by_class {
        let grid_len = group.iter().map(|t| t.scores.len()).max().unwrap_or(0);
        let l_start = group.first().map(|t| t.l_start).unwrap_or(0);
        debug_assert!(group.iter().all(|t| t.l_start == l_start));

        let mut points = Vec::new();
        for i in 0..grid_len {
            let mut values: Vec<f64> = group
                .iter()
                .filter_map(|t| t.scores.get(i).copied().flatten())
                .collect();
            if values.is_empty() {
                continue;
            }
            values.sort_by(f64::total_cmp);
            let mid = values.len() / 2;
            let median = if values.len() % 2 == 1 {
                values[mid]
            } else {
                (values[mid - 1] + values[mid]) / 2.0
            };
            points.push(MedianPoint {
                l: l_start + i as i64,
                median,
                count: values.len(),
            });
        }
        out.insert(class, points);
    }
    out
}
