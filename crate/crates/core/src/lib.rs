//! Mixing-consistent deep clustering.
//!
//! An autoencoder is trained so that decoded mixes of two latent codes look
//! like the nearer input, while an adversarial critic pushes mixed
//! reconstructions towards realism. The crate also carries the evaluation
//! pipeline (PCA whitening, k-means, Hungarian accuracy, NMI) and the latent
//! geometry analyses.

pub mod analysis;
pub mod checkpoint;
pub mod cluster;
pub mod data;
pub mod error;
pub mod model;
pub mod nn;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use rng::SeededRng;
