//! Robustness evaluation for click-based interactive segmentation.
//!
//! The crate simulates user clicks with the standard "largest error region,
//! furthest point" strategy, and additionally searches for minimizing and
//! maximizing click trajectories with a constrained gradient optimizer. The
//! gap between the two trajectories' quality curves is the robustness score.
//!
//! Module map:
//!
//! - [`maskops`]: masks, distance transforms, connectivity, IoU and Boundary IoU.
//! - [`clickgen`]: clicks, trajectories, the baseline click strategy.
//! - [`render`]: differentiable soft-disk rasterization of clicks.
//! - [`segmenters`]: the segmenter contract, reference models, bridge client.
//! - [`attack`]: losses and the adversarial click optimizer.
//! - [`bruteforce`]: exhaustive grid search and heatmaps.
//! - [`metrics`]: AuC, robustness gap, aggregation, rank correlations.
//! - [`harness`]: datasets, configs, synthetic data and the run commands.

pub mod attack;
pub mod bruteforce;
pub mod clickgen;
mod error;
pub mod harness;
pub mod maskops;
pub mod metrics;
pub mod render;
pub mod segmenters;

pub use error::{Error, Result};
