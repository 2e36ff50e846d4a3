//! IO, streaming engine and tooling around the `cascade-core` detection
//! pipeline.

pub mod engine;
pub mod fixtures;
pub mod formats;
pub mod sidecar;
pub mod workload;
pub mod config;
