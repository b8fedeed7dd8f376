//! Forecasting of high-resolution binary sensor states as kernelized low-rank
//! matrix completion.
//!
//! The pipeline is:
//!
//! 1. [`data`] turns raw per-second detector panels into lagged input/output
//!    matrices (one block per day for the ensemble).
//! 2. [`kernel`] evaluates the periodic RBF kernel and assembles the four Gram
//!    blocks, so the feature map is never materialized.
//! 3. [`solver`] runs four-block coordinate descent on the completion problem
//!    using only Gram matrices and a handful of cached `r x r` / `T x r`
//!    products, and reports convergence diagnostics.
//! 4. [`threshold`] turns real-valued scores into binary states per sensor.
//! 5. [`boost`] re-weights training columns across rounds and combines the
//!    rounds by weighted majority.
//! 6. [`metrics`] scores binary forecasts (MAE and the Skorokhod M1 distance)
//!    and provides persistence / linear ridge baselines.
//!
//! [`simgen`] produces synthetic signalized-intersection panels for testing.
//!
//! Matrix columns are 0-based throughout the code. Where documentation talks
//! about "column `j`" of a training block it means the 0-based index `j`,
//! which corresponds to time step `j + 1` in 1-based notation.

pub mod boost;
pub mod data;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod simgen;
pub mod solver;
pub mod threshold;

pub use error::{Error, Result};
