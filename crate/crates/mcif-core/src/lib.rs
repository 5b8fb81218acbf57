//! Core algorithms for anomaly detection in astronomical transient light curves.
//!
//! The pipeline implemented here trains a class-weighted recurrent classifier
//! on common transient classes, reuses its penultimate layer as a latent
//! space, fits one isolation forest per known class (multi-class isolation
//! forests, MCIF), and ranks objects by the minimum per-class anomaly score.
//!
//! The crate is `no_std`-compatible (`alloc` required): everything in here is
//! pure computation over in-memory data. File formats, CSV/JSON persistence,
//! and the command-line driver live in the companion `mcif-cli` crate.
//!
//! Module map:
//!
//! * [`data`]: light-curve data model, sequence encoding, splits, feature
//!   standardization.
//! * [`iforest`]: isolation-forest engine with optional per-sample weights.
//! * [`encoder`]: recurrent/dense classifier with hand-derived gradients,
//!   Adam training, and latent extraction.
//! * [`mcif`]: one forest per class, scored by the minimum across classes.
//! * [`eval`]: AUROC, recall@K, representative resampling, one-class-out
//!   protocol, single-forest baseline, latent-size sweep.
//! * [`synth`]: deterministic synthetic population generator.
//! * [`realtime`]: incremental scoring of truncated light curves.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod audit;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod iforest;
pub mod linalg;
pub mod math;
pub mod mcif;
pub mod realtime;
pub mod rng;
pub mod synth;

pub use error::CoreError;
pub use linalg::Mat;
