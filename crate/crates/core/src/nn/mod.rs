//! Minimal dense-network engine: matrices, fully connected layers, losses,
//! backpropagation and RMSprop.

pub mod loss;
mod matrix;
mod network;
mod optim;

pub use matrix::Matrix;
pub use network::{Activation, DenseLayer, Gradients, LayerGrad, Network};
pub use optim::{RmspropConfig, RmspropState};
