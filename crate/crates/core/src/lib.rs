//! Disease detection from segmentation features on unbalanced data.
//!
//! Pipeline: a fully convolutional segmentation network is trained on normal
//! cardiac-style images only; its feature maps are then fed to a small
//! two-class classification network trained on a heavily unbalanced
//! positive/negative split. The crate ships the whole desk-scale stack:
//!
//! - [`tensor`] / [`tape`]: a dense tensor type and reverse-mode autodiff
//!   covering exactly the operations the two networks need.
//! - [`net`]: segmentation and classification network builders, checkpoints
//!   and the feature-combination assembly.
//! - [`train`]: weighted cross-entropy losses, Adam, and the training loops.
//! - [`phantom`]: a deterministic synthetic four-chamber phantom corpus with
//!   ground-truth label maps and two disease variants.
//! - [`metrics`]: Dice, confusion counts, Cohen's kappa, mean/std grouping.
//! - [`exper`]: cross-validation and unbalanced-sweep harnesses.
//! - [`report`]: SVG line charts from sweep results.
//!
//! Math is generic over the scalar type via [`Scalar`] (f32 for training,
//! f64 for gradient verification); [`Tensor32`] and [`Tensor64`] are the
//! concrete aliases used throughout.

pub mod exper;
pub mod metrics;
pub mod net;
pub mod ops;
pub mod phantom;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod tensor;
pub mod train;

pub use scalar::Scalar;
pub use tensor::{LabelMap, Tensor, TensorError};

/// Training-precision tensor.
pub type Tensor32 = Tensor<f32>;
/// Verification-precision tensor (gradient checks).
pub type Tensor64 = Tensor<f64>;
