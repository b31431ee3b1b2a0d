//! File formats, feature caches, model registry and the `densecap`
//! command-line tool around the `densecap-core` optimizer.
//!
//! - [`data_io`]: ground-truth, predictions and caption JSON files.
//! - [`cache`]: the binary frame-feature cache and its JSON sidecar.
//! - [`features`]: decoded frames to cached embeddings, plus the planted
//!   fixture video.
//! - [`config`]: flat TOML run configuration and its hash.
//! - [`registry`]: model ids to backends.
//! - [`snapshot`]: run-state save and restore.
//! - [`eval`] and [`timeline`]: reports and static renderings.
//! - [`cli`]: the subcommands.

pub mod cache;
pub mod cli;
pub mod config;
pub mod data_io;
pub mod error;
pub mod eval;
pub mod features;
pub mod registry;
pub mod snapshot;
pub mod timeline;

pub use error::{Error, Result};
