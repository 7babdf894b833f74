//! Tensors, layers, sequential networks and the training loop.

pub mod checkpoint;
pub mod layers;
mod model;
mod tensor;
mod train;

pub use layers::{Mode, Padding};
pub use model::{Grads, Layer, NetworkConfig, Sequential};
pub use tensor::{argmax, Scalar, Tensor};
pub use train::{evaluate, train, EpochStats, History, Optimizer, TrainConfig};
