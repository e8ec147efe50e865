//! Crowdsourced GNSS spoofing detection from the spatial distribution of
//! double differential pseudoranges (D²PS).
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: satellite lines of sight and differential geometry sums.
//! - [`scenario`]: simulated worlds (receivers, spoofer, noise, multipath).
//! - [`d2ps`]: single/double differencing and the randomized D²PS sample set.
//! - [`statmodels`]: closed-form densities, variance predictions, chi-squared.
//! - [`resize`]: grid partition of the monitor area into enclosed regions.
//! - [`detector`]: the tri-level variance detector.
//! - [`glrt`]: the pairwise GLRT voting baseline.
//! - [`harness`]: Monte Carlo experiments, CSV output and acceptance runs.
//!
//! [`oracle`] holds brute-force reference computations that are kept apart
//! from the production code paths they are used to check.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod d2ps;
pub mod detector;
pub mod error;
pub mod geometry;
pub mod glrt;
pub mod harness;
pub mod oracle;
pub mod resize;
pub mod rng;
pub mod scenario;
pub mod statmodels;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Number of unordered pairs that can be drawn from `n` items.
pub fn n_choose_2(n: usize) -> usize {
    if n < 2 {
        0
    } else {
        n * (n - 1) / 2
    }
}
