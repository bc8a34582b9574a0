//! Scratch convolutional network, deep-feature classifiers and Grad-CAM
//! localization for two-class brain MRI screening.
//!
//! The crate is organised bottom-up:
//!
//! * [`engine`] dense tensors, a recorded computation graph with reverse-mode
//!   differentiation, and the Adam optimizer.
//! * [`dataset`] netpbm ingestion, preprocessing, stratified splits and the
//!   synthetic blob generator.
//! * [`cnn`] the 12-layer network, training loop, feature extraction and
//!   hyperparameter random search.
//! * [`classifiers`] six classical classifiers fit on extracted features.
//! * [`metrics`] confusion matrix and derived metrics.
//! * [`gradcam`] class activation heatmaps and overlays.
//! * [`persistence`] the `TSCK` checkpoint format.
//! * [`harness`] verification oracles shared by the test suites.

pub mod classifiers;
pub mod cnn;
pub mod dataset;
pub mod engine;
mod error;
pub mod features;
pub mod gradcam;
pub mod harness;
pub mod metrics;
pub mod persistence;
pub mod rng;

pub use error::{Error, Result};
