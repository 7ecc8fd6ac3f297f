//! Single-generator face attribute inversion.
//!
//! One U-net generator with gated skip connections maps a face image to the
//! same face with a chosen binary attribute flipped, and maps it back again
//! with the same parameters. A two-headed discriminator supervises realism and
//! attribute class. The crate also carries the evaluation metrics used to
//! score translations: the feature-norm ratio (DFN) and a PCA-reduced
//! Fréchet distance (FID).

pub mod cli;
pub mod config;
pub mod data;
pub mod discriminator;
pub mod error;
pub mod generator;
pub mod image_tensor;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod trainer;

pub use error::{Error, Result};
pub use image_tensor::ImageTensor;
