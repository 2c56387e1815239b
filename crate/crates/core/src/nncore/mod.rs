//! Minimal reverse-mode differentiable numeric core.
//!
//! Everything the lifting models are built from: dense f64 tensors, layers
//! with exact backward passes, Kaiming initialization, Adam, the MPJPE loss,
//! and a finite-difference gradient checker. 64-bit throughout; forward
//! passes are bit-deterministic given (weights, inputs, seed, mode).

pub mod gradcheck;
pub mod init;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use gradcheck::{fd_compare, grad_check, Backprop, GradCheckReport};
pub use init::kaiming_init;
pub use layers::{
    conv1d_backward, conv1d_forward, conv1d_out_len, linear_backward, linear_forward,
    relu_backward, relu_forward, BatchNormState, Conv1d, Dropout, Linear, Mode, Param, Relu,
};
pub use loss::{mpjpe, mpjpe_backward, mpjpe_sum};
pub use optim::{adam_step, adam_step_with};
pub use rng::{derive_seed, rng_from_seed};
pub use tensor::Tensor;
