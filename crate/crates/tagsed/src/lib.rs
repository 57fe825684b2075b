//! Two-stage semi-supervised sound event detection.
//!
//! Stage-1 trains an audio-tagging model on weak labels (including strong
//! labels flattened to clip level) plus unlabeled clips, then infers
//! pseudo-weak labels on the unlabeled set. Stage-2 trains a
//! frequency-dynamic CRNN on strong, weak, and pseudo-weak labels.
//! Evaluation decodes events with class-adaptive median filtering and
//! scores them with PSDS under intersection-based matching.

pub mod augment;
pub mod cli;
pub mod config;
pub mod error;
pub mod features;
pub mod labels;
pub mod metrics;
pub mod models;
pub mod postprocess;
pub mod psds;
pub mod synth;
pub mod train;
pub mod numerics;

pub use error::{Error, Result};
