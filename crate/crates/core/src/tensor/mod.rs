//! Dense numeric kernel: matrices, small perceptrons with analytic gradients,
//! Adam, and seeded random streams.

mod adam;
mod matrix;
mod mlp;
mod rng;

pub use adam::{AdamConfig, AdamState};
pub(crate) use matrix::accumulate_row;
pub use matrix::Matrix;
pub use mlp::{
    mlp_backward, mlp_backward_traced, mlp_forward, mlp_forward_traced, mlp_input_grad,
    Activation, ForwardTrace, Layer, LayerGrad, MlpGrads, MlpParams,
};
pub use rng::SeededRng;
