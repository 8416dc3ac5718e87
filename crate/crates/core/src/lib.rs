//! End-to-end SAR automatic target recognition with a fully convolutional
//! network.
//!
//! The network maps a single-channel SAR image of any size to a per-pixel
//! score map over twelve classes: background, ten target types and a
//! target-front class that encodes pose. Everything needed around it lives
//! here too: the layer primitives with hand-written gradients, a
//! deterministic trainer, a synthetic SAR-like chip generator, Netpbm I/O
//! and the segmentation and chip-classification metrics.

mod error;
mod gemm;

pub mod image;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pnm;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use image::{LabelImage, SarImage, ScoreKind, ScoreMap};
pub use model::{NetworkParams, VersNetConfig};
pub use rng::Prng;
pub use tensor::Tensor;

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/layers.md")]
    mod layers {}
    #[doc = include_str!("../../../book/src/synthetic-data.md")]
    mod synthetic_data {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
