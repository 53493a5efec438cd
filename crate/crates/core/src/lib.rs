//! Wasserstein gradient flows of 1D interaction energies `E(μ) = ½ ∬ W(x - y) dμ dμ`
//! with potentials that may have a cusp at the origin.
//!
//! Measures are handled through their quantile functions. On the cone of
//! nondecreasing quantile grids the JKO step becomes a strongly convex
//! problem, solved here by projected gradient with isotonic projection.

// `!(x > 0.0)` also rejects NaN, which is the point of those checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod jko;
pub mod measures;
pub mod particles;
pub mod potential;
pub mod transport;

pub use error::{Error, Result};
pub use measures::{Measure1D, QuantileGrid};
pub use potential::Potential;
