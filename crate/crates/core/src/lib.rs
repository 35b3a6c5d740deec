//! SAR echo simulation, Range Doppler focusing, and learned image formation.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: complex/real matrices, DFTs, the seeded generator
//! - [`sim`]: point-target raw echo synthesis
//! - [`rda`]: Range Doppler image formation (the supervised oracle)
//! - [`dataset`]: echo/image pair generation, normalization, SARP files
//! - [`nn`]: layers, losses, Adam, SARM checkpoints
//! - [`models`]: encoder, residual upsampler, classifier, training, ablations
//! - [`metrics`]: SSIM, accuracy, impulse-response analysis, throughput
//! - [`formats`]: echo and image files
//!
//! Inner loops go through [`par`], which uses rayon when the `parallel`
//! feature is on and runs sequentially otherwise, with identical results.

pub mod dataset;
pub mod formats;
pub mod gradcheck;
pub mod nn;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod par;
pub mod rda;
pub mod sim;
