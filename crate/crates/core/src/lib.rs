//! Cross-reference image quality assessment.
//!
//! A query image is scored against a set of unregistered views of the same
//! scene. The model predicts a per-pixel map that approximates the SSIM map
//! one would get against the (unavailable) aligned ground truth.
//!
//! * [`metrics`]: SSIM maps, PSNR, Pearson/Spearman.
//! * [`pfm`]: float map storage.
//! * [`datagen`]: multi-view scene synthesis, distortions, dataset trees.
//! * [`model`]: patch encoder, cross-attention decoder, score head, checkpoints.
//! * [`train`]: batch sampling, L1 loss, AdamW, training loop.
//! * [`eval`]: per-scene tables, rankings, ablation, attention export, reports.

pub mod datagen;
pub mod error;
pub mod eval;
pub mod image;
pub mod metrics;
pub mod model;
pub mod parallel;
pub mod pfm;
pub mod seed;
pub mod train;

pub use crate::error::{Error, Result};
pub use crate::image::{ImageGrid, ScoreMap};
pub use crate::metrics::SsimParams;
