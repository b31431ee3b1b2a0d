//! Test-time optimization for zero-shot dense video captioning.
//!
//! Given per-frame visual features of one video, this crate jointly optimizes
//! a set of soft temporal moment masks and per-moment language-model prefixes
//! so that each moment ends up with a localized caption. Everything here is
//! pure computation over in-memory data and builds without `std`; file
//! formats, configuration files and the command line live in the `densecap`
//! companion crate.
//!
//! Module map:
//!
//! - [`temporal`]: moment parameters, soft masks, pooling, intervals, tIoU and
//!   the pairwise tIoU loss, with analytic gradients.
//! - [`backend`]: vision-text scorer and language-model interfaces plus the
//!   deterministic mock implementations used for testing.
//! - [`generation`]: prefix construction, alignment scores, vision and
//!   language losses and per-moment caption state.
//! - [`optimizer`]: AdamW, the cosine schedule, run configuration and the
//!   joint optimization loop.
//! - [`eval`]: tIoU matching, CIDEr, the SODA-style alignment score and corpus
//!   reports.
//! - [`baselines`]: uniform segmentation and caption-then-match.
//! - [`sampling`] and [`fixture`]: frame sampling arithmetic and the planted
//!   synthetic video used by tests.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod backend;
pub mod baselines;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod generation;
pub mod math;
pub mod optimizer;
pub mod sampling;
pub mod temporal;

pub use error::{Error, Result};
