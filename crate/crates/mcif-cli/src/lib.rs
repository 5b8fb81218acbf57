//! File formats, pipeline orchestration, and CLI plumbing around
//! [`mcif_core`].
//!
//! Everything that touches the filesystem lives here: CSV ingestion and
//! export, versioned JSON model persistence, run configuration with content
//! digests, and the stage functions the `mcif` binary dispatches to.

pub mod cli;
pub mod config;
pub mod csvio;
pub mod modelio;
pub mod pipeline;
pub mod reference;
