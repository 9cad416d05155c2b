//! Location-aware generative adversarial networks for sparse 25x25 jet
//! images.
//!
//! The crate covers the full pipeline: jet-event preprocessing into images,
//! physics observables (pT, mass, n-subjettiness), a from-scratch tensor core
//! with reverse-mode differentiation and locally connected layers, the LAGAN
//! generator/discriminator with its training loop, and Earth-Mover's-Distance
//! based scoring of generative models.

pub mod binio;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod jet;
pub mod nn;
pub mod observables;
pub mod model;
pub mod preprocess;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
