//! Multimodal brain-encoding pipeline.
//!
//! Text, audio and video embedding time series are aligned to the fMRI TR
//! grid, fed to a subject-conditioned transformer encoder that predicts
//! parcel-level BOLD responses, and scored with per-parcel Pearson
//! correlation, optionally normalized by a noise ceiling. Many trained models
//! can be blended per parcel with softmax weights. A synthetic teacher
//! generator provides datasets with a known ground truth.

pub mod alignment;
pub mod datastore;
pub mod ensembler;
pub mod error;
pub mod evaluator;
pub mod synthgen;
pub mod trainer;
pub mod tribenet;

pub use error::{Result, TribeError};
