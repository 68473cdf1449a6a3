//! Minimal differentiable kernels for training the action-inference regressor.

pub mod checkpoint;
mod kernels;
pub mod loss;
pub mod network;
pub mod optim;
pub mod tensor;

pub use loss::mse_loss;
pub use network::{ForwardCache, Gradients, LayerSpec, Network};
pub use optim::{Method, OptimizerState};
pub use tensor::Tensor;
