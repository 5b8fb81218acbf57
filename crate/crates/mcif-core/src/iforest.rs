//! Isolation forests built from scratch.
//!
//! Each tree is grown on a subsample (optionally weighted) of the training
//! matrix by recursive uniform splits; anomalies isolate in fewer splits, so
//! the anomaly score is `2^(-E[path length] / c(psi))` where `c` is the
//! average unsuccessful-search path length of a binary search tree. Scores
//! are in (0, 1) with higher meaning more anomalous; this is a strictly
//! monotone reparameterization of the negated decision-function convention,
//! so every ranking built on it is unchanged.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg::Mat;
use crate::math;
use crate::rng::{self, substream, SeededRng};

/// Euler–Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Average path length of an unsuccessful BST search over `n` points:
/// `2 H(n-1) - 2 (n-1) / n`, and 0 for `n <= 1` (a single point cannot be
/// split). The harmonic number is summed exactly up to `n - 1 = 1000` and
/// approximated by `ln m + gamma + 1/(2m) - 1/(12 m^2)` beyond that.
pub fn avg_path_correction(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let m = n - 1;
    let h = if m <= 1000 {
        (1..=m).map(|k| 1.0 / k as f64).sum()
    } else {
        let mf = m as f64;
        math::ln(mf) + EULER_GAMMA + 1.0 / (2.0 * mf) - 1.0 / (12.0 * mf * mf)
    };
    2.0 * h - 2.0 * (m as f64) / (n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal {
        split_dim: usize,
        split_value: f64,
        left: u32,
        right: u32,
    },
    External {
        size: u32,
    },
}

// Compact array encoding keeps persisted forests (up to a few thousand
// trees) at a reasonable size: ["i", dim, value, left, right] / ["e", size].
impl Serialize for Node {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> core::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        match *self {
            Node::Internal {
                split_dim,
                split_value,
                left,
                right,
            } => {
                let mut seq = ser.serialize_seq(Some(5))?;
                seq.serialize_element("i")?;
                seq.serialize_element(&split_dim)?;
                seq.serialize_element(&split_value)?;
                seq.serialize_element(&left)?;
                seq.serialize_element(&right)?;
                seq.end()
            }
            Node::External { size } => {
                let mut seq = ser.serialize_seq(Some(2))?;
                seq.serialize_element("e")?;
                seq.serialize_element(&size)?;
                seq.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for Node {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> core::result::Result<Self, D::Error> {
        use serde::de::{Error, SeqAccess, Visitor};

        struct NodeVisitor;
        impl<'de> Visitor<'de> for NodeVisitor {
            type Value = Node;

            fn expecting(&self, f: &mut core::fmt::Formatter) -> core::fmt::Result {
                f.write_str("a node tuple [\"i\", dim, value, left, right] or [\"e\", size]")
            }

            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> core::result::Result<Node, A::Error> {
                let tag: alloc::string::String = seq
                    .next_element()?
                    .ok_or_else(|| A::Error::custom("missing node tag"))?;
                match tag.as_str() {
                    "i" => Ok(Node::Internal {
                        split_dim: seq
                            .next_element()?
                            .ok_or_else(|| A::Error::custom("missing split_dim"))?,
                        split_value: seq
                            .next_element()?
                            .ok_or_else(|| A::Error::custom("missing split_value"))?,
                        left: seq
                            .next_element()?
                            .ok_or_else(|| A::Error::custom("missing left"))?,
                        right: seq
                            .next_element()?
                            .ok_or_else(|| A::Error::custom("missing right"))?,
                    }),
                    "e" => Ok(Node::External {
                        size: seq
                            .next_element()?
                            .ok_or_else(|| A::Error::custom("missing size"))?,
                    }),
                    other => Err(A::Error::custom(alloc::format!("unknown node tag `{other}`"))),
                }
            }
        }
        de.deserialize_seq(NodeVisitor)
    }
}

/// One randomized isolation tree stored as a node arena (index 0 is the
/// root).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    pub nodes: Vec<Node>,
    pub height_limit: usize,
}

impl IsolationTree {
    /// Grow a tree over the rows of `data` selected by `indices`.
    fn build(data: &Mat, indices: &[usize], height_limit: usize, stream: &mut SeededRng) -> Self {
        let mut nodes = Vec::new();
        let mut scratch: Vec<usize> = indices.to_vec();
        let len = scratch.len();
        Self::grow(data, &mut scratch, 0, len, 0, height_limit, &mut nodes, stream);
        Self {
            nodes,
            height_limit,
        }
    }

    /// Recursive construction over `scratch[lo..hi]`; returns the node index.
    #[allow(clippy::too_many_arguments)]
    fn grow(
        data: &Mat,
        scratch: &mut Vec<usize>,
        lo: usize,
        hi: usize,
        depth: usize,
        height_limit: usize,
        nodes: &mut Vec<Node>,
        stream: &mut SeededRng,
    ) -> u32 {
        let size = hi - lo;
        if depth >= height_limit || size <= 1 {
            nodes.push(Node::External { size: size as u32 });
            return (nodes.len() - 1) as u32;
        }

        // Only dimensions with nonzero extent in this subsample can split it.
        let dim = data.cols();
        let mut extents: Vec<(usize, f64, f64)> = Vec::new();
        for d in 0..dim {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for &i in &scratch[lo..hi] {
                let v = data.get(i, d);
                min = min.min(v);
                max = max.max(v);
            }
            if max > min {
                extents.push((d, min, max));
            }
        }
        if extents.is_empty() {
            // All remaining rows are identical; nothing can isolate them.
            nodes.push(Node::External { size: size as u32 });
            return (nodes.len() - 1) as u32;
        }

        let (split_dim, min, max) = extents[stream.gen_range(0..extents.len())];
        // Uniform on the open interval (min, max); resample the pathological
        // draw that lands exactly on min.
        let split_value = loop {
            let v = min + stream.gen::<f64>() * (max - min);
            if v > min && v < max {
                break v;
            }
        };

        // Partition scratch[lo..hi] in place: < split goes left.
        let mut mid = lo;
        for k in lo..hi {
            if data.get(scratch[k], split_dim) < split_value {
                scratch.swap(k, mid);
                mid += 1;
            }
        }
        debug_assert!(mid > lo && mid < hi, "split produced an empty side");

        let here = nodes.len();
        nodes.push(Node::External { size: 0 }); // placeholder
        let left = Self::grow(data, scratch, lo, mid, depth + 1, height_limit, nodes, stream);
        let right = Self::grow(data, scratch, mid, hi, depth + 1, height_limit, nodes, stream);
        nodes[here] = Node::Internal {
            split_dim,
            split_value,
            left,
            right,
        };
        here as u32
    }

    /// Edges from the root to the reached node, plus the size correction at
    /// the external node.
    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut depth = 0.0;
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                Node::External { size } => {
                    return depth + avg_path_correction(size as usize);
                }
                Node::Internal {
                    split_dim,
                    split_value,
                    left,
                    right,
                } => {
                    at = if x[split_dim] < split_value {
                        left as usize
                    } else {
                        right as usize
                    };
                    depth += 1.0;
                }
            }
        }
    }

    pub fn max_depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize, depth: usize) -> usize {
            match nodes[at] {
                Node::External { .. } => depth,
                Node::Internal { left, right, .. } => walk(nodes, left as usize, depth + 1)
                    .max(walk(nodes, right as usize, depth + 1)),
            }
        }
        walk(&self.nodes, 0, 0)
    }
}

/// Ensemble of isolation trees with the subsample-size normalization
/// constant baked in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    pub trees: Vec<IsolationTree>,
    /// Effective subsample size (requested psi clamped to n).
    pub psi: usize,
    pub n_estimators: usize,
    /// `avg_path_correction(psi)`.
    pub c_psi: f64,
    /// Feature dimensionality of the training matrix.
    pub dim: usize,
    pub seed: u64,
}

/// Forest construction parameters. `psi` is clamped to the sample count at
/// fit time; 256 is the canonical default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub psi: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 200,
            psi: 256,
        }
    }
}

impl IsolationForest {
    /// Fit a forest. Each tree draws its own subsample of size
    /// `min(psi, n)` without replacement, with probability proportional to
    /// `weights` when given; trees use independent seed substreams, so the
    /// result is deterministic under `seed`.
    pub fn fit(
        data: &Mat,
        params: ForestParams,
        weights: Option<&[f64]>,
        seed: u64,
    ) -> Result<Self> {
        let plans = Self::planned_subsamples(data.rows(), params, weights, seed)?;
        Self::fit_on_subsamples(data, &plans, params, seed)
    }

    /// The per-tree subsample index lists `fit` would draw. Exposed so
    /// callers can audit exactly which rows trained which tree.
    pub fn planned_subsamples(
        n: usize,
        params: ForestParams,
        weights: Option<&[f64]>,
        seed: u64,
    ) -> Result<Vec<Vec<usize>>> {
        if n < 2 {
            return Err(CoreError::TooFewSamples { min: 2, got: n });
        }
        if params.psi < 2 {
            return Err(CoreError::BadSubsampleSize { got: params.psi });
        }
        if params.n_estimators < 1 {
            return Err(CoreError::Invalid("n_estimators must be >= 1".into()));
        }
        if let Some(w) = weights {
            if w.len() != n {
                return Err(CoreError::DimensionMismatch {
                    expected: n,
                    got: w.len(),
                });
            }
            if let Some(index) = w.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(CoreError::BadWeight { index });
            }
        }
        // All-equal weights are exactly the uniform draw; routing them through
        // the uniform sampler makes "equal weights" and "no weights" produce
        // identical forests under a shared seed.
        let weights = weights.filter(|w| w.iter().any(|&x| x != w[0]));
        let psi = params.psi.min(n);
        let mut plans = Vec::with_capacity(params.n_estimators);
        for t in 0..params.n_estimators {
            let mut stream = rng::rng_from_seed(substream(seed, "iforest-subsample", t as u64));
            let picked = match weights {
                Some(w) => rng::weighted_sample_without_replacement(&mut stream, w, psi),
                None => rng::sample_without_replacement(&mut stream, n, psi),
            };
            plans.push(picked);
        }
        Ok(plans)
    }

    /// Grow one tree per subsample plan. `fit` composes
    /// [`Self::planned_subsamples`] with this.
    pub fn fit_on_subsamples(
        data: &Mat,
        plans: &[Vec<usize>],
        params: ForestParams,
        seed: u64,
    ) -> Result<Self> {
        if data.cols() == 0 {
            return Err(CoreError::ZeroDimensions);
        }
        let psi = params.psi.min(data.rows());
        let height_limit = math::ceil(math::log2(psi as f64)) as usize;
        let trees = plans
            .iter()
            .enumerate()
            .map(|(t, plan)| {
                let mut stream = rng::rng_from_seed(substream(seed, "iforest-grow", t as u64));
                IsolationTree::build(data, plan, height_limit, &mut stream)
            })
            .collect();
        Ok(Self {
            trees,
            psi,
            n_estimators: params.n_estimators,
            c_psi: avg_path_correction(psi),
            dim: data.cols(),
            seed,
        })
    }

    pub fn mean_path_length(&self, x: &[f64]) -> f64 {
        let total: f64 = self.trees.iter().map(|t| t.path_length(x)).sum();
        total / self.trees.len() as f64
    }

    /// Anomaly score in (0, 1); higher = more anomalous.
    pub fn score(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        math::exp2(-self.mean_path_length(x) / self.c_psi)
    }
}

/// Inverse-frequency sample weights over class labels, normalized to mean 1.
/// The same scheme the classifier uses for its class weights.
pub fn inverse_frequency_weights(labels: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &c in labels {
        counts[c] += 1;
    }
    let raw: Vec<f64> = counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { 1.0 / c as f64 })
        .collect();
    let mean = {
        let present = raw.iter().filter(|&&w| w > 0.0).count().max(1);
        raw.iter().sum::<f64>() / present as f64
    };
    labels.iter().map(|&c| raw[c] / mean).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn matrix(rows: &[&[f64]]) -> Mat {
        Mat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    #[test]
    fn correction_base_cases() {
        assert_eq!(avg_path_correction(0), 0.0);
        assert_eq!(avg_path_correction(1), 0.0);
        // 2 H(1) - 2 (1/2) = 2 - 1, evaluated by hand.
        assert_eq!(avg_path_correction(2), 1.0);
    }

    #[test]
    fn correction_matches_exact_harmonic_sum() {
        // Exact-sum oracle, independent of the implementation's branch.
        for n in [3usize, 10, 100, 256, 999, 1000] {
            let h: f64 = (1..n).map(|k| 1.0 / k as f64).sum();
            let expected = 2.0 * h - 2.0 * (n as f64 - 1.0) / n as f64;
            assert!(
                (avg_path_correction(n) - expected).abs() < 1e-9,
                "c({n}) mismatch"
            );
        }
        // Asymptotic branch stays close to the exact sum just past the cutoff.
        let n = 5000usize;
        let h: f64 = (1..n).map(|k| 1.0 / k as f64).sum();
        let expected = 2.0 * h - 2.0 * (n as f64 - 1.0) / n as f64;
        assert!((avg_path_correction(n) - expected).abs() < 1e-9);
    }

    #[test]
    fn two_points_isolate_at_depth_one() {
        let data = matrix(&[&[0.0, 0.0], &[1.0, 3.0]]);
        let forest = IsolationForest::fit(
            &data,
            ForestParams {
                n_estimators: 1,
                psi: 2,
            },
            None,
            5,
        )
        .unwrap();
        let tree = &forest.trees[0];
        assert_eq!(tree.path_length(&[0.0, 0.0]), 1.0);
        assert_eq!(tree.path_length(&[1.0, 3.0]), 1.0);
    }

    #[test]
    fn external_node_adds_size_correction() {
        // A tree truncated at depth 0 (single external node of size n)
        // reports c(n) directly; with size 1, zero.
        let single = IsolationTree {
            nodes: vec![Node::External { size: 1 }],
            height_limit: 0,
        };
        assert_eq!(single.path_length(&[0.0]), 0.0);

        // External node of size 5 at depth 2: hand-built arena.
        let c5: f64 = {
            let h: f64 = (1..5).map(|k| 1.0 / k as f64).sum();
            2.0 * h - 2.0 * 4.0 / 5.0
        };
        let tree = IsolationTree {
            nodes: vec![
                Node::Internal {
                    split_dim: 0,
                    split_value: 0.5,
                    left: 1,
                    right: 2,
                },
                Node::External { size: 1 },
                Node::Internal {
                    split_dim: 0,
                    split_value: 0.8,
                    left: 3,
                    right: 4,
                },
                Node::External { size: 5 },
                Node::External { size: 1 },
            ],
            height_limit: 3,
        };
        let got = tree.path_length(&[0.6]);
        assert!((got - (2.0 + c5)).abs() < 1e-12);
    }

    /// Straight-line recursive traversal, independent of the iterative
    /// implementation in `path_length`.
    fn oracle_path(tree: &IsolationTree, at: usize, x: &[f64], depth: f64) -> f64 {
        match tree.nodes[at] {
            Node::External { size } => depth + avg_path_correction(size as usize),
            Node::Internal {
                split_dim,
                split_value,
                left,
                right,
            } => {
                if x[split_dim] < split_value {
                    oracle_path(tree, left as usize, x, depth + 1.0)
                } else {
                    oracle_path(tree, right as usize, x, depth + 1.0)
                }
            }
        }
    }

    #[test]
    fn traversal_matches_recursive_oracle_on_grid() {
        let train = matrix(&[
            &[0.0, 0.0],
            &[0.2, 0.9],
            &[0.5, 0.4],
            &[0.9, 0.1],
            &[1.0, 1.0],
        ]);
        let forest = IsolationForest::fit(
            &train,
            ForestParams {
                n_estimators: 20,
                psi: 5,
            },
            None,
            99,
        )
        .unwrap();
        for gx in 0..11 {
            for gy in 0..11 {
                let x = [gx as f64 / 10.0, gy as f64 / 10.0];
                for tree in &forest.trees {
                    assert_eq!(tree.path_length(&x), oracle_path(tree, 0, &x, 0.0));
                }
            }
        }
    }

    #[test]
    fn fit_is_deterministic_under_seed() {
        let mut stream = rng_from_seed(4);
        let rows: Vec<Vec<f64>> = (0..64)
            .map(|_| (0..3).map(|_| stream.gen::<f64>()).collect())
            .collect();
        let data = Mat::from_rows(&rows);
        let params = ForestParams {
            n_estimators: 10,
            psi: 16,
        };
        let a = IsolationForest::fit(&data, params, None, 21).unwrap();
        let b = IsolationForest::fit(&data, params, None, 21).unwrap();
        assert_eq!(a, b);
        let c = IsolationForest::fit(&data, params, None, 22).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn constant_dataset_yields_single_external_nodes() {
        let data = matrix(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        let forest = IsolationForest::fit(
            &data,
            ForestParams {
                n_estimators: 5,
                psi: 4,
            },
            None,
            1,
        )
        .unwrap();
        for tree in &forest.trees {
            assert_eq!(tree.nodes.len(), 1);
            assert!(matches!(tree.nodes[0], Node::External { size: 4 }));
        }
        // Forest is still scoreable.
        let s = forest.score(&[1.0, 2.0]);
        assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn depth_respects_height_limit() {
        let mut stream = rng_from_seed(8);
        let rows: Vec<Vec<f64>> = (0..256)
            .map(|_| vec![stream.gen::<f64>(), stream.gen::<f64>()])
            .collect();
        let data = Mat::from_rows(&rows);
        let forest = IsolationForest::fit(
            &data,
            ForestParams {
                n_estimators: 8,
                psi: 64,
            },
            None,
            3,
        )
        .unwrap();
        let limit = math::ceil(math::log2(64.0)) as usize;
        for tree in &forest.trees {
            assert_eq!(tree.height_limit, limit);
            assert!(tree.max_depth() <= limit);
        }
    }

    #[test]
    fn weighted_subsampling_frequency_tracks_weights() {
        // Two "classes": rows 0..10 carry weight 9, rows 10..100 weight 1.
        // Expected inclusion rate of heavy rows in a subsample of 10 drawn
        // from weights (9 for 10 rows, 1 for 90 rows): heavy rows should
        // appear far more often than the 10% a uniform draw would give.
        let n = 100usize;
        let mut weights = vec![1.0; n];
        for w in weights.iter_mut().take(10) {
            *w = 9.0;
        }
        let mut heavy_picks = 0usize;
        let mut total = 0usize;
        let draws = 1000usize;
        for t in 0..draws {
            let mut stream = rng_from_seed(1000 + t as u64);
            let picked = rng::weighted_sample_without_replacement(&mut stream, &weights, 10);
            heavy_picks += picked.iter().filter(|&&i| i < 10).count();
            total += picked.len();
        }
        let rate = heavy_picks as f64 / total as f64;
        // Uniform would give 0.10; weight 9 should pull the rate well above.
        // Binomial 3-sigma band around the empirically derived expectation
        // (~0.43 for this configuration, sequential without-replacement).
        assert!(rate > 0.30 && rate < 0.60, "heavy inclusion rate {rate}");
    }

    #[test]
    fn scores_separate_outlier_from_cluster() {
        // Constructed-separation oracle over 20 seeds.
        for seed in 0..20u64 {
            let mut stream = rng_from_seed(7000 + seed);
            let mut rows: Vec<Vec<f64>> = (0..100)
                .map(|_| {
                    vec![
                        0.5 + 0.05 * rng::standard_normal(&mut stream),
                        0.5 + 0.05 * rng::standard_normal(&mut stream),
                    ]
                })
                .collect();
            rows.push(vec![5.0, -4.0]); // far outlier, in training
            let data = Mat::from_rows(&rows);
            let forest = IsolationForest::fit(&data, ForestParams::default(), None, seed).unwrap();
            let outlier = forest.score(&[5.0, -4.0]);
            for row in rows.iter().take(100) {
                assert!(forest.score(row) < outlier, "seed {seed}");
            }
        }
    }

    #[test]
    fn inlier_duplicate_scores_in_reference_band() {
        // Empirical band for a dense uniform cube, psi=256, 200 trees: a
        // duplicated training point is a typical inlier, s around 0.4-0.5.
        let mut stream = rng_from_seed(31);
        let rows: Vec<Vec<f64>> = (0..2000)
            .map(|_| (0..4).map(|_| stream.gen::<f64>()).collect())
            .collect();
        let data = Mat::from_rows(&rows);
        let forest = IsolationForest::fit(&data, ForestParams::default(), None, 17).unwrap();
        let probe = rows[123].clone();
        let s = forest.score(&probe);
        assert!((0.35..=0.65).contains(&s), "inlier score {s}");
    }

    #[test]
    fn score_at_cpsi_path_is_half() {
        // Definitional anchor: mean path length == c_psi gives s = 0.5.
        assert_eq!(math::exp2(-1.0), 0.5);
    }

    #[test]
    fn zero_dim_matrix_is_rejected() {
        let data = Mat::zeros(4, 0);
        let err = IsolationForest::fit(&data, ForestParams::default(), None, 0).unwrap_err();
        assert_eq!(err, CoreError::ZeroDimensions);
    }

    #[test]
    fn permutation_adjusted_fit_gives_identical_scores() {
        let mut stream = rng_from_seed(70);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| stream.gen::<f64>()).collect())
            .collect();
        let data = Mat::from_rows(&rows);
        let params = ForestParams {
            n_estimators: 12,
            psi: 16,
        };
        let plans = IsolationForest::planned_subsamples(40, params, None, 55).unwrap();
        let forest = IsolationForest::fit_on_subsamples(&data, &plans, params, 55).unwrap();

        // Rotate rows and remap the planned indices accordingly: the same
        // physical rows feed each tree, so scores agree exactly.
        let perm: Vec<usize> = (0..40).map(|i| (i + 17) % 40).collect();
        let mut inverse = vec![0usize; 40];
        for (new_pos, &old) in perm.iter().enumerate() {
            inverse[old] = new_pos;
        }
        let permuted = Mat::from_rows(&perm.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>());
        let remapped: Vec<Vec<usize>> = plans
            .iter()
            .map(|plan| plan.iter().map(|&i| inverse[i]).collect())
            .collect();
        let forest_p = IsolationForest::fit_on_subsamples(&permuted, &remapped, params, 55).unwrap();

        for row in &rows {
            assert_eq!(forest.score(row), forest_p.score(row));
        }
    }

    #[test]
    fn inverse_frequency_weights_have_mean_one_per_class() {
        // Frequencies (90, 10): per-class weights 0.2 and 1.8.
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i >= 90)).collect();
        let w = inverse_frequency_weights(&labels, 2);
        assert!((w[0] - 0.2).abs() < 1e-12);
        assert!((w[99] - 1.8).abs() < 1e-12);
    }

    #[test]
    fn dominant_weight_is_almost_always_included() {
        // One index carries essentially all the mass; drawing a single
        // element must pick it with probability ~1. Binomial bound: at
        // p >= 1 - 5e-8, even 1 miss in 1000 draws would be far outside 3
        // sigma.
        let mut weights = vec![1e-9; 51];
        weights[0] = 1.0;
        let mut hits = 0;
        for t in 0..1000u64 {
            let mut stream = rng_from_seed(5000 + t);
            if rng::weighted_sample_without_replacement(&mut stream, &weights, 1) == vec![0] {
                hits += 1;
            }
        }
        assert_eq!(hits, 1000);
    }

    /// Spearman rank correlation between two score vectors.
    fn spearman(a: &[f64], b: &[f64]) -> f64 {
        fn ranks(xs: &[f64]) -> Vec<f64> {
            let mut order: Vec<usize> = (0..xs.len()).collect();
            order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
            let mut out = vec![0.0; xs.len()];
            for (rank, &i) in order.iter().enumerate() {
                out[i] = rank as f64;
            }
            out
        }
        let (ra, rb) = (ranks(a), ranks(b));
        let n = a.len() as f64;
        let mean = (n - 1.0) / 2.0;
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (x, y) in ra.iter().zip(&rb) {
            cov += (x - mean) * (y - mean);
            va += (x - mean) * (x - mean);
            vb += (y - mean) * (y - mean);
        }
        cov / math::sqrt(va * vb)
    }

    #[test]
    fn duplicating_training_data_preserves_probe_ranking() {
        // n -> 2n duplication with psi fixed leaves the probe ranking
        // unchanged in expectation: Spearman rho of seed-averaged scores
        // above 0.95 over 50 seeds.
        let mut stream = rng_from_seed(404);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| {
                vec![
                    rng::standard_normal(&mut stream),
                    rng::standard_normal(&mut stream),
                ]
            })
            .collect();
        let mut doubled = rows.clone();
        doubled.extend(rows.iter().cloned());
        let base = Mat::from_rows(&rows);
        let twice = Mat::from_rows(&doubled);

        let probes: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                vec![
                    2.5 * rng::standard_normal(&mut stream),
                    2.5 * rng::standard_normal(&mut stream),
                ]
            })
            .collect();

        let params = ForestParams {
            n_estimators: 30,
            psi: 64,
        };
        let mut mean_base = vec![0.0; probes.len()];
        let mut mean_twice = vec![0.0; probes.len()];
        for seed in 0..50u64 {
            let f1 = IsolationForest::fit(&base, params, None, seed).unwrap();
            let f2 = IsolationForest::fit(&twice, params, None, 10_000 + seed).unwrap();
            for (i, p) in probes.iter().enumerate() {
                mean_base[i] += f1.score(p) / 50.0;
                mean_twice[i] += f2.score(p) / 50.0;
            }
        }
        let rho = spearman(&mean_base, &mean_twice);
        assert!(rho > 0.95, "Spearman rho {rho:.3}");
    }
}
