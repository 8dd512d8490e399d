//! Few-shot semantic part localization with And-Or graphs grown on top of
//! pre-extracted convolutional feature maps.
//!
//! The graph has four layers: a semantic part chooses among part templates,
//! each template composes latent patterns, and each latent pattern chooses one
//! unit of a conv-slice inside its deformation range. [`miner`] grows the
//! graph from a handful of annotated boxes, [`parser`] localizes the part in
//! new images, [`eval`] scores the localizations.

pub mod aog;
pub mod cli;
pub mod error;
pub mod eval;
pub mod feature_store;
pub mod geometry;
pub mod miner;
pub mod parser;

pub use error::{Error, Result};
