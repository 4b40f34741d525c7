//! Automated restricted randomization for experiments.
//!
//! Given multi-period pre-treatment panel data, this crate learns blocking
//! partitions (variable-selection trees, prognostic-score intervals,
//! adaptive grids), assigns treatment within them (blocks, pairs, or
//! rerandomization), selects between competing strategies out of sample,
//! and evaluates candidate designs with a placebo Monte Carlo harness.
//!
//! The main entry points are:
//!
//! - [`dataset`] — panel loading, validation, and standardization
//! - [`blocking`] — partition construction ([`blocking::vs_blocking`],
//!   [`blocking::fps_blocking`], allocators, grids, fallbacks)
//! - [`assignment`] — blocked assignment, pairwise matching, rerandomization
//! - [`strategy`] — out-of-sample comparison of design strategies
//! - [`estimation`] — treatment-effect OLS with block dummies
//! - [`sim`] — placebo simulation harness and synthetic panels
//!
//! All randomness flows from caller-supplied `u64` seeds through the
//! derivation in [`seed`]; every operation is deterministic given its seed.

pub mod assignment;
pub mod blocking;
pub mod cv;
pub mod dataset;
mod linalg;

pub mod error;
pub mod estimation;
pub mod ml;
pub mod seed;
pub mod sim;
pub mod strategy;

pub use error::{Error, Result};
