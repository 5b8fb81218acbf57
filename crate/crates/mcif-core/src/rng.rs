//! Deterministic seed derivation and sampling helpers.
//!
//! Every randomized stage derives its own seed from one master seed, a stage
//! name, and an index, so that a whole pipeline reproduces from a single
//! integer and independent stages can run in any order (or in parallel)
//! without perturbing each other's streams.

use alloc::vec::Vec;

pub use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::math;

/// Derive a substream seed from `(master, stage, index)`.
///
/// FNV-1a over the inputs followed by a splitmix64 finalizer. The exact
/// construction is part of the reproducibility contract: artifacts record the
/// master seed, and every stage seed is recomputable from it.
pub fn substream(master: u64, stage: &str, index: u64) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

    let mut h = FNV_OFFSET;
    for &b in master
        .to_le_bytes()
        .iter()
        .chain(stage.as_bytes())
        .chain(index.to_le_bytes().iter())
    {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The RNG used throughout the crate. ChaCha keeps streams identical across
/// platforms and rand versions.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One standard normal draw (Box–Muller, cosine branch).
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    // gen::<f64>() is in [0, 1); shift to (0, 1] so ln never sees zero.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(2.0 * core::f64::consts::PI * u2)
}

/// Sample `k` indices from `0..n` without replacement, uniformly.
///
/// Partial Fisher–Yates; the returned order is the draw order.
pub fn sample_without_replacement(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    let k = k.min(n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Weighted sampling of `k` indices without replacement (Efraimidis–Spirakis
/// A-Res): each index gets key `u^(1/w)` and the top-k keys win. Inclusion
/// probability is proportional to weight; deterministic under the rng.
pub fn weighted_sample_without_replacement(
    rng: &mut impl Rng,
    weights: &[f64],
    k: usize,
) -> Vec<usize> {
    let k = k.min(weights.len());
    // (key, index); keep the k largest keys in a small binary min-heap
    // emulated with a sorted insert since k is modest (subsample sizes).
    let mut top: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (i, &w) in weights.iter().enumerate() {
        debug_assert!(w > 0.0 && w.is_finite());
        let u: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
        let key = math::powf(u, 1.0 / w);
        if top.len() < k {
            top.push((key, i));
            top.sort_by(|a, b| a.0.total_cmp(&b.0));
        } else if key > top[0].0 {
            top[0] = (key, i);
            top.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
    }
    // Report in descending key order so the draw order is deterministic.
    top.reverse();
    top.into_iter().map(|(_, i)| i).collect()
}

/// In-place Fisher–Yates shuffle.
pub fn shuffle<T>(rng: &mut impl Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}
