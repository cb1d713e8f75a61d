//! Semi-supervised estimators that combine a small labeled sample with
//! model predictions on a large unlabeled sample: ERM, SS, PPI, tuned PPI,
//! cross-fitted PPI (CPPI) and tuned CPPI, the bootstrap tuning of λ, batch
//! and meta-learning variants for iteratively trained networks, and two
//! wireless application drivers (beam alignment, RSSI localization).

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN.

pub mod datasets;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod labelers;
pub mod linalg;
pub mod losses;
pub mod meta;
pub mod rng;
pub mod tuning;
pub mod wireless;

pub use error::{Error, Result};
