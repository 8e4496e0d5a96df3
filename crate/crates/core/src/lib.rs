//! Quality control for volumetric segmentation outputs.
//!
//! The crate turns Monte-Carlo sample stacks, reconstructions and predicted
//! masks into per-voxel uncertainty and error maps, aggregates those maps
//! into voxel-wise sums, predicts Dice without ground truth, and gates
//! likely failures. Every volume is stored x-fastest.
//!
//! Modules:
//! - [`volume`]: volume types, preprocessing and file I/O (NIfTI-1 subset, rawvol)
//! - [`maps`]: sample averaging, entropy maps, error maps, voxel-wise sums
//! - [`metrics`]: Dice, SSIM, Pearson r, MAE, precision/recall
//! - [`regressor`]: feature extraction and a Huber/Adam Dice regressor
//! - [`gate`]: threshold gating, cohort CSV and gate reports
//! - [`synth`]: deterministic synthetic cohorts

pub mod error;
pub mod gate;
pub mod maps;
pub mod metrics;
pub mod regressor;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
