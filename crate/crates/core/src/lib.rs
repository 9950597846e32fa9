//! Contrastive pretraining of a separable-convolution encoder on face
//! images, followed by a frozen-feature linear probe for real/fake
//! classification and ROC evaluation.

pub mod augmentation;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod contrastive;
pub mod dataset;
pub mod error;
pub mod image;
pub mod metrics;
pub mod model;
pub mod plot;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
