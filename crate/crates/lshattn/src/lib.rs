// Validation uses `!(x > 0.0)`-style comparisons so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! LSH- and random-feature-based kernel approximation for point clouds.
//!
//! The crate provides ground-truth truncated Gaussian kernels over synthetic
//! point clouds, three approximation schemes (random Fourier features,
//! OR-only Euclidean LSH, OR & AND LSH) with exact FLOP accounting, a sweep
//! harness for the error/computation tradeoff, and a block-diagonal LSH
//! attention forward pass with a dense oracle.

pub mod approx;
pub mod attention;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod lsh;
pub mod seeding;
pub mod tradeoff;

pub use error::{Error, Result};
