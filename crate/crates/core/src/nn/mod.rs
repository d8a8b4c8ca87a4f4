//! Minimal differentiable layer engine.

mod adam;
mod layer;
mod loss;
mod network;
mod real;
mod tensor;

pub use adam::{adam_step, AdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON};
pub use layer::{
    avgpool2x2_forward, conv3x3_forward, dense_forward, he_init_std, leaky_relu_forward,
    upsample_nn2x_forward, LayerKind, LayerParams, ParamGrads,
};
pub use loss::mse_loss;
pub use network::{Gradients, NetworkAdam, Node, Sequential, Tape};
pub use real::{gemm, Real};
pub use tensor::Tensor;
