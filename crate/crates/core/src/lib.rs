//! Group-wise rotating and attention (GRA) convolution, its ARC baseline, and
//! the symbolic ResNet-50 accounting used to compare them.
//!
//! The forward pass of a GRA module:
//!
//! 1. [`angle_generator`] predicts `n` angles `θ` and scales `λ` per sample.
//! 2. [`grouped_rotation`] splits the kernel bank into `n` output-channel
//!    groups and rotates each by its angle with one batched matrix product.
//! 3. [`sample_conv`] convolves every sample with its own rotated kernels.
//! 4. [`attention`] gates each output group with a spatial attention map.
//!
//! [`rotation`] holds the bilinear rotation operator underneath step 2, and
//! [`weights_io`] the `.graw` tensor container used by the command line tool.

pub mod angle_generator;
pub mod arch_metrics;
pub mod attention;
pub mod bench;
pub mod demo;
pub mod error;
pub mod grouped_rotation;
pub mod params_io;
pub mod pipeline;
pub mod rotation;
pub mod sample_conv;
pub mod tensor;
pub mod weights_io;

pub use angle_generator::{generator_forward, generator_init, AngleGenParams, AngleSet};
pub use attention::{attention_forward, AttentionParams};
pub use error::{Error, Result};
pub use grouped_rotation::{group_view, rotate_groups_batched, rotate_groups_naive, KernelBank};
pub use pipeline::{arc_forward, gra_forward, ArcParams, GraParams};
pub use rotation::{
    rotate_kernel_direct, rotation_matrix, rotation_matrix_dtheta, RotationOperator,
};
pub use sample_conv::conv_per_sample;
pub use tensor::{bmm, conv2d, Element, Tensor};
pub use weights_io::{read_container, write_container, TensorContainer};
