//! Small dense-tensor toolkit with reverse-mode autodiff.
//!
//! Everything here is CPU-only and deterministic: tensors are plain row-major
//! buffers, networks are replayed onto a fresh [`graph::Graph`] tape each
//! step, and all randomness flows through the seeded [`rng::Rng`]. The crate
//! covers exactly what the training pipeline needs — 2-D convolution and its
//! transpose, max-pooling, dense layers, elementwise activations, binary
//! cross-entropy, Adam, and a binary checkpoint format.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod ops;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{NumError, Result};
pub use graph::{bce_value, Activation, Graph, TensorId, BCE_EPSILON};
pub use layers::{LayerSpec, Param, Sequential, WeightInit};
pub use ops::Padding;
pub use optim::{AdamConfig, AdamState};
pub use rng::{gaussian_sample, normal_init, Rng};
pub use tensor::{Real, Tensor};
