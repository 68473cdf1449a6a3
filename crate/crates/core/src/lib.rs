//! Action inference as a metric for video prediction.
//!
//! A predictor is scored by training a small convolutional regressor to
//! recover the gripper displacement between consecutive predicted frames and
//! measuring R²/MAE against the true actions, next to PSNR, SSIM and
//! FVD-lite. [`sim`] supplies a controllable pushing world, [`predict`] a set
//! of synthetic predictors, [`inference`] the regressor and its scores,
//! [`metrics`] the perceptual metrics and [`harness`] the cached end-to-end
//! pipeline and report.

pub mod dataset;
pub mod error;
pub mod harness;
pub mod imageops;
pub mod inference;
pub mod metrics;
pub mod nn;
pub mod predict;
pub mod rng;
pub mod sim;
pub mod video;

pub use error::{Error, Result};
