//! Dataset and config ingestion, the synthetic data generator, and the
//! commands behind the CLI.

mod commands;
mod config;
mod dataset;
pub mod synthetic;

pub use commands::{
    bruteforce, correlate, evaluate, gen_synthetic, spread, BruteforceOutput, EvaluateOutput,
    SpreadRow,
};
pub use config::{RunConfig, SegmenterKind, SegmenterProfile, WORKERS_ENV};
pub use dataset::{
    load_dataset, load_image_png, load_mask_png, save_image_png, save_mask_png, DatasetManifest,
    ManifestEntry, Sample,
};
