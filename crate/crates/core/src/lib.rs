//! Two-sample tests for high-dimensional mean vectors.
//!
//! The crate covers the sum-of-squares (CQ/BS) statistics, single- and
//! multi-level thresholding, data transformation by a banded Cholesky
//! estimate of the precision matrix, max-norm (CLX) comparison tests,
//! parametric bootstrap calibration, a Monte Carlo harness for size and
//! power studies, and a grouped-testing pipeline with Benjamini–Hochberg
//! FDR control.
//!
//! Monte Carlo replicates, bootstrap copies and per-group jobs run on rayon
//! when the `parallel` feature is enabled (the default). Results never
//! depend on the worker count: every replicate draws from its own RNG stream
//! and results are merged by index.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bootstrap;
pub mod data;
pub mod dist;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod pipeline;
pub mod precision;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod transform;

pub use data::TwoSampleData;
pub use error::{Error, Result};
pub use exec::Execution;
pub use stats::{Method, PValueSource, TestOutcome};
