//! Random degradation draws for training.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernel::{AnisotropicSpec, BlurKernel, DEFAULT_KERNEL_SIZE};
use crate::error::{Error, Result};

/// Which training degradation family to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DegradationMode {
    /// Isotropic blur, no noise.
    #[default]
    Iso,
    /// Anisotropic blur plus white Gaussian noise.
    Aniso,
}

impl DegradationMode {
    pub fn name(self) -> &'static str {
        match self {
            DegradationMode::Iso => "iso",
            DegradationMode::Aniso => "aniso",
        }
    }
}

/// How the blur kernel was parametrised; kept for logs and CSV export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelParams {
    Isotropic { sigma: f64 },
    Anisotropic(AnisotropicSpec),
    Custom,
}

/// Full parametrisation of one blur → decimate → noise degradation.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationSpec {
    pub kernel: BlurKernel,
    pub params: KernelParams,
    pub scale: usize,
    /// Noise standard deviation on the 0–255 scale.
    pub noise_sigma: f64,
}

impl DegradationSpec {
    pub fn new(
        kernel: BlurKernel,
        params: KernelParams,
        scale: usize,
        noise_sigma: f64,
    ) -> Result<Self> {
        if scale == 0 {
            return Err(Error::invalid("scale must be at least 1"));
        }
        if noise_sigma.is_nan() || noise_sigma < 0.0 {
            return Err(Error::invalid(format!(
                "noise sigma must be >= 0, got {noise_sigma}"
            )));
        }
        Ok(Self {
            kernel,
            params,
            scale,
            noise_sigma,
        })
    }

    pub fn isotropic(sigma: f64, scale: usize, noise_sigma: f64) -> Result<Self> {
        Self::new(
            BlurKernel::isotropic(sigma, DEFAULT_KERNEL_SIZE)?,
            KernelParams::Isotropic { sigma },
            scale,
            noise_sigma,
        )
    }

    pub fn anisotropic(spec: AnisotropicSpec, scale: usize, noise_sigma: f64) -> Result<Self> {
        Self::new(
            BlurKernel::anisotropic(spec, DEFAULT_KERNEL_SIZE)?,
            KernelParams::Anisotropic(spec),
            scale,
            noise_sigma,
        )
    }
}

/// Ranges the training sampler draws from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub iso_sigma: (f64, f64),
    pub aniso_lambda: (f64, f64),
    /// Upper bound of the uniform noise draw in aniso mode (0–255 scale).
    pub aniso_noise_max: f64,
    /// Use `aniso_noise_max` as a fixed level instead of an upper bound.
    pub aniso_noise_fixed: bool,
    pub scale: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iso_sigma: (0.2, 4.0),
            aniso_lambda: (0.2, 4.0),
            aniso_noise_max: 25.0,
            aniso_noise_fixed: false,
            scale: 4,
        }
    }
}

impl SamplerConfig {
    pub fn sample(&self, mode: DegradationMode, rng: &mut impl Rng) -> Result<DegradationSpec> {
        match mode {
            DegradationMode::Iso => {
                let (lo, hi) = self.iso_sigma;
                let sigma = rng.random_range(lo..=hi);
                DegradationSpec::isotropic(sigma, self.scale, 0.0)
            }
            DegradationMode::Aniso => {
                let (lo, hi) = self.aniso_lambda;
                let lambda1 = rng.random_range(lo..hi);
                let lambda2 = rng.random_range(lo..hi);
                let theta = rng.random_range(0.0..PI);
                let noise = if self.aniso_noise_fixed {
                    self.aniso_noise_max
                } else {
                    rng.random_range(0.0..=self.aniso_noise_max)
                };
                DegradationSpec::anisotropic(
                    AnisotropicSpec {
                        lambda1,
                        lambda2,
                        theta,
                    },
                    self.scale,
                    noise,
                )
            }
        }
    }
}

/// Draws a ×4 degradation with the default ranges.
pub fn sample_degradation(mode: DegradationMode, rng: &mut impl Rng) -> Result<DegradationSpec> {
    SamplerConfig::default().sample(mode, rng)
}
