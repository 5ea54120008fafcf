//! Autoencoder-based reduction of three-dimensional two-phase interface fields.
//!
//! The crate is organised bottom-up:
//!
//! - [`volume`]: voxel grids, patch extraction, dataset manifests and on-disk formats
//! - [`repr`]: exact Euclidean distance transform and conversions between the
//!   signed-distance, diffuse (tanh) and sharp interface representations
//! - [`synthgen`]: synthetic droplet datasets with lognormal radii
//! - [`tensor`]: a small reverse-mode autodiff engine with exactly the 3D operators
//!   the autoencoder needs, plus losses and Adam
//! - [`model`]: the residual convolutional autoencoder, training and checkpoints
//! - [`metrics`]: Dice, normalized Hausdorff distance, droplet size distributions
//!   and confidence intervals
//! - [`harness`]: experiment drivers (representation sweep, grid search, seed
//!   uncertainty, train-size sweep, cross-dataset evaluation) and report emission

pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod repr;
pub mod synthgen;
pub mod tensor;
pub mod volume;

pub use error::{Error, Result};
