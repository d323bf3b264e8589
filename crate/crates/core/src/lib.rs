//! Fundamental matrix estimation from two point correspondences by matching
//! epipolar lines with a dynamic-programming stereo similarity, plus the
//! classical 7- and 8-point estimators and an evaluation harness.

pub mod error;
pub mod geometry;
pub mod imaging;
pub mod stereo;
pub mod candidates;
pub mod estimator;
pub mod baselines;

pub use error::{Error, Result};
