//! Blur kernels, degradation sampling and the classic degradation model.

pub mod dataset;
mod degrade;
pub mod kernel;
mod sample;

pub use dataset::{
    load_png_dir, procedural_textures, synthesize_dataset, DegradationRecord, NamedImage,
};
pub use degrade::{blur_decimate, degrade};
pub use kernel::{
    gaussian8_kernels, gaussian8_sigmas, AnisotropicSpec, BlurKernel, IsotropicSpec,
    DEFAULT_KERNEL_SIZE,
};
pub use sample::{
    sample_degradation, DegradationMode, DegradationSpec, KernelParams, SamplerConfig,
};
