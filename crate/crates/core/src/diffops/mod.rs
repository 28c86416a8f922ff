//! Differentiable operator core: tensors, layers with explicit backward
//! passes, losses and the Adam optimizer.

pub mod adam;
pub mod conv;
pub mod gradcheck;
pub mod init;
pub mod layers;
pub mod loss;
pub mod named;
pub mod params;
pub mod tensor;

pub use adam::{Adam, AdamConfig, AdamState};
pub use conv::{
    conv2d, conv2d_backward, conv2d_counted, depthwise_conv2d, depthwise_conv2d_backward,
};
pub use layers::{
    global_avg_pool, global_avg_pool_backward, linear, linear_backward, relu, relu_backward,
};
pub use loss::{kd_l1_loss, kd_l2_loss, kl_loss, l1_loss, KdLossKind, Loss};
pub use params::ParamSet;
pub use tensor::{lit, Real, Tensor};
