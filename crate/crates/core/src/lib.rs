//! Pseudo-mask generation for camouflaged object detection from unlabeled
//! feature maps.
//!
//! The pipeline runs in two stages. First every image is split into a coarse
//! foreground/background mask by spectral clustering, one prototype per
//! category is mined from each image, and images whose coarse split looks
//! unreliable are filtered out by an adaptive histogram threshold. Second,
//! every patch feature is labeled by a KNN vote against the resulting
//! prototype libraries, fused over flipped and rotated views.

pub mod cli;
pub mod coarse_mask;
pub mod error;
pub mod evalkit;
pub mod manifest;
pub mod mvkr;
pub mod numerics;
pub mod prototype_miner;
pub mod synth_bench;
pub mod tensor_store;

pub use error::{Error, Result};
