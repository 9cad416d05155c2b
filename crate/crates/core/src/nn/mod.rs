//! Tensor arithmetic with reverse-mode differentiation and the layer set the
//! LAGAN generator and discriminator are built from.

pub mod adam;
pub mod checkpoint;
pub(crate) mod gemm;
pub mod kernels;
pub mod layers;
pub mod params;
pub mod tape;

pub use adam::{Adam, AdamConfig};
pub use layers::{output_extent, Border, LayerKind, LayerSpec};
pub use params::{Param, ParamId, ParamStore};
pub use tape::{bce_logit, sigmoid, Activation, BatchStats, Gradients, NormMode, Tape, Var};
