//! Set matching between detector predictions and ground truths.
//!
//! The crate provides the regularized transport plan (entropic optimal
//! transport with KL-relaxed marginals) next to Hungarian assignment and a
//! small-ε "exact" transport baseline, a detection-style cost model built
//! from class probabilities, L1 box distance and GIoU, a synthetic scene
//! generator, and experiment drivers that compare the matchers.

pub mod cli;
pub mod cost;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod numfmt;
pub mod scenes;
pub mod solvers;

pub use error::{Error, Result};
