//! Small double-precision network engine: NCHW tensors, depthwise and
//! pointwise convolutions, ReLU, dropout, masked MSE, Adam and
//! finite-difference gradient checking.

mod activation;
mod adam;
mod conv;
mod gradcheck;
mod loss;
mod tensor;

pub use activation::{relu, relu_backward, Dropout, DropoutMask, Mode};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{DepthwiseConv, PointwiseConv};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, REL_FLOOR};
pub use loss::{mse_loss, mse_loss_with_grad};
pub use tensor::Tensor4;
