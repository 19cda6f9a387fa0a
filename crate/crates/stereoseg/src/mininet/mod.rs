//! Desk-scale encoder-decoder pixel classifier.
//!
//! The architecture keeps the mechanism that matters — max pooling with
//! stored indices, mirrored index-driven unpooling, n-channel input, plain
//! momentum SGD — at a width and depth that trains in seconds on a CPU.
//! All arithmetic is f64 so analytic gradients can be verified against
//! central finite differences to tight tolerances.

mod checkpoint;
mod layers;
mod net;
mod tensor;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use layers::{
    maxpool_with_indices, relu, unpool_backward, unpool_with_indices, Conv2d, ConvGrads,
    PoolIndices,
};
pub use net::{Gradients, MiniNet, DEFAULT_STAGE1_FILTERS, DEFAULT_STAGE2_FILTERS};
pub use tensor::Tensor;
pub use train::{
    loss_and_gradients, sample_loss, softmax_cross_entropy, train, write_loss_csv, TrainConfig,
};
