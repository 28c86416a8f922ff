//! Blind ×4 super-resolution guided by an implicit degradation representation
//! (IDR) that a student estimator learns from a teacher by distillation.
//!
//! - [`imaging`]: images, luma, pixel (un)shuffle, PSNR/SSIM
//! - [`degradation`]: blur kernels and the blur → decimate → noise model
//! - [`diffops`]: tensors, layers with hand-written backward passes, losses, Adam
//! - [`kd_ide`]: teacher/student degradation estimators
//! - [`sr_net`]: IDR-conditioned dynamic-convolution SR network
//! - [`training`]: two-stage training and checkpoints
//! - [`eval`]: evaluation protocols and IDR separability

pub mod degradation;
pub mod diffops;
mod error;
pub mod eval;
pub mod imaging;
pub mod kd_ide;
pub mod sr_net;
pub mod training;

pub use error::{Error, Result};
