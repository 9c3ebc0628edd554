//! Coupled denoising and saliency-prediction GANs.
//!
//! A denoising generator (G1) cleans a Gaussian-corrupted image, a saliency
//! generator (G2) predicts an object mask from the cleaned image, and a
//! reverse generator (G3) maps the mask back to the image so a
//! cycle-consistency term can constrain G2. Two discriminators (D1 for
//! images, D2 for image-conditioned maps) supply the adversarial terms.
//!
//! The crate ships its own small CNN engine ([`nets`]) so every layer's
//! gradient can be checked against finite differences, the noise-corruption
//! data pipeline ([`data`]), all loss terms ([`losses`]), the three-phase
//! training schedule ([`train`]) and the saliency metrics ([`eval`]).

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod losses;
pub mod nets;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
