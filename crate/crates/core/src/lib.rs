//! Acoustic scene classification with GAN-based data augmentation.

pub mod augment;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod gan;
pub mod models;
pub mod pipeline;
pub mod training;
pub mod tensor;

pub use error::{Error, Result};
