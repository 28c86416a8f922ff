//! Normalised Gaussian blur kernels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel side length used for every training and evaluation blur.
pub const DEFAULT_KERNEL_SIZE: usize = 21;

/// Widths of the Gaussian8 evaluation kernels at ×4.
pub const GAUSSIAN8_RANGE: (f64, f64) = (1.8, 3.2);

/// A square, odd-sized blur kernel whose weights are nonnegative and sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    size: usize,
    weights: Vec<f64>,
}

/// Isotropic Gaussian width, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotropicSpec {
    pub sigma: f64,
}

/// Anisotropic Gaussian: covariance `R(θ) diag(λ1, λ2) R(θ)ᵀ` (variances in px²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnisotropicSpec {
    pub lambda1: f64,
    pub lambda2: f64,
    pub theta: f64,
}

fn check_size(size: usize) -> Result<()> {
    if size.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "kernel size must be odd, got {size}"
        )));
    }
    Ok(())
}

impl BlurKernel {
    /// Normalises arbitrary nonnegative weights.
    pub fn from_weights(size: usize, weights: Vec<f64>) -> Result<Self> {
        check_size(size)?;
        if weights.len() != size * size {
            return Err(Error::shape(format!(
                "{size}x{size} kernel needs {} weights, got {}",
                size * size,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(
                "kernel weights must be finite and nonnegative",
            ));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::invalid("kernel weights sum to zero"));
        }
        Ok(Self {
            size,
            weights: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    /// 1 at the centre, 0 elsewhere.
    pub fn delta(size: usize) -> Result<Self> {
        check_size(size)?;
        let mut w = vec![0.0; size * size];
        w[(size / 2) * size + size / 2] = 1.0;
        Self::from_weights(size, w)
    }

    /// `w ∝ exp(-(dx² + dy²) / 2σ²)`.
    pub fn isotropic(sigma: f64, size: usize) -> Result<Self> {
        check_size(size)?;
        if sigma.is_nan() || sigma <= 0.0 {
            return Err(Error::invalid(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        let c = (size / 2) as f64;
        let mut w = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                let (dy, dx) = (i as f64 - c, j as f64 - c);
                w.push((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
            }
        }
        Self::from_weights(size, w)
    }

    /// `w ∝ exp(-½ vᵀ Σ⁻¹ v)` with `v = (dx, dy)` and `λ1` along the x axis at θ = 0.
    pub fn anisotropic(spec: AnisotropicSpec, size: usize) -> Result<Self> {
        check_size(size)?;
        let AnisotropicSpec {
            lambda1,
            lambda2,
            theta,
        } = spec;
        if !(lambda1 > 0.0 && lambda2 > 0.0) || !theta.is_finite() {
            return Err(Error::invalid(format!(
                "covariance eigenvalues must be positive, got ({lambda1}, {lambda2})"
            )));
        }
        // Σ⁻¹ = R diag(1/λ1, 1/λ2) Rᵀ
        let (s, co) = theta.sin_cos();
        let (a, b) = (1.0 / lambda1, 1.0 / lambda2);
        let inv_xx = co * co * a + s * s * b;
        let inv_yy = s * s * a + co * co * b;
        let inv_xy = co * s * (a - b);
        let c = (size / 2) as f64;
        let mut w = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                let (dy, dx) = (i as f64 - c, j as f64 - c);
                let q = inv_xx * dx * dx + 2.0 * inv_xy * dx * dy + inv_yy * dy * dy;
                w.push((-0.5 * q).exp());
            }
        }
        Self::from_weights(size, w)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Row-major weights; row index is y.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.size + col]
    }

    /// Weight at integer offset `(dx, dy)` from the centre.
    pub fn weight_at_offset(&self, dx: isize, dy: isize) -> f64 {
        let c = (self.size / 2) as isize;
        self.weight((c + dy) as usize, (c + dx) as usize)
    }
}

/// Widths of the eight Gaussian8 kernels: evenly spaced over [1.8, 3.2].
pub fn gaussian8_sigmas() -> [f64; 8] {
    let (lo, hi) = GAUSSIAN8_RANGE;
    std::array::from_fn(|i| lo + (hi - lo) * i as f64 / 7.0)
}

/// The eight Gaussian8 evaluation kernels (×4 only).
pub fn gaussian8_kernels(scale: usize) -> Result<Vec<(f64, BlurKernel)>> {
    if scale != 4 {
        return Err(Error::invalid(format!(
            "Gaussian8 is defined for scale 4, got {scale}"
        )));
    }
    gaussian8_sigmas()
        .into_iter()
        .map(|s| BlurKernel::isotropic(s, DEFAULT_KERNEL_SIZE).map(|k| (s, k)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn isotropic_normalised_and_symmetric() {
        for &(sigma, size) in &[(0.2, 21), (1.0, 21), (4.0, 21), (2.5, 7), (0.7, 1)] {
            let k = BlurKernel::isotropic(sigma, size).unwrap();
            assert!((k.weights().iter().sum::<f64>() - 1.0).abs() < 1e-6);
            for i in 0..size {
                for j in 0..size {
                    assert_eq!(k.weight(i, j), k.weight(j, i));
                    assert_eq!(k.weight(i, j), k.weight(size - 1 - i, size - 1 - j));
                }
            }
        }
    }

    #[test]
    fn isotropic_center_matches_formula() {
        let k = BlurKernel::isotropic(1.0, 21).unwrap();
        let mut total = 0.0;
        for dy in -10i32..=10 {
            for dx in -10i32..=10 {
                total += (-f64::from(dx * dx + dy * dy) / 2.0).exp();
            }
        }
        assert!((k.weight(10, 10) - 1.0 / total).abs() < 1e-15);
    }

    #[test]
    fn invalid_arguments() {
        assert!(BlurKernel::isotropic(1.0, 20).is_err());
        assert!(BlurKernel::isotropic(0.0, 21).is_err());
        assert!(BlurKernel::isotropic(-1.0, 21).is_err());
        let spec = AnisotropicSpec {
            lambda1: 0.0,
            lambda2: 1.0,
            theta: 0.0,
        };
        assert!(BlurKernel::anisotropic(spec, 21).is_err());
        assert!(BlurKernel::from_weights(3, vec![-1.0; 9]).is_err());
    }

    #[test]
    fn anisotropic_equal_eigenvalues_is_isotropic() {
        for &(sigma, theta) in &[(0.5, 0.0), (1.3, 0.7), (3.9, 2.9)] {
            let a = BlurKernel::anisotropic(
                AnisotropicSpec {
                    lambda1: sigma * sigma,
                    lambda2: sigma * sigma,
                    theta,
                },
                21,
            )
            .unwrap();
            let b = BlurKernel::isotropic(sigma, 21).unwrap();
            for (x, y) in a.weights().iter().zip(b.weights()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn quarter_turn_with_swapped_eigenvalues() {
        let a = BlurKernel::anisotropic(
            AnisotropicSpec {
                lambda1: 3.0,
                lambda2: 0.5,
                theta: 0.4,
            },
            21,
        )
        .unwrap();
        let b = BlurKernel::anisotropic(
            AnisotropicSpec {
                lambda1: 0.5,
                lambda2: 3.0,
                theta: 0.4 + PI / 2.0,
            },
            21,
        )
        .unwrap();
        for (x, y) in a.weights().iter().zip(b.weights()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn axis_aligned_ratio() {
        let k = BlurKernel::anisotropic(
            AnisotropicSpec {
                lambda1: 4.0,
                lambda2: 0.2,
                theta: 0.0,
            },
            21,
        )
        .unwrap();
        let ratio = k.weight_at_offset(0, 1) / k.weight_at_offset(1, 0);
        let expected = (-0.5f64 * (1.0 / 0.2 - 1.0 / 4.0)).exp();
        assert!((ratio - expected).abs() < 1e-12 * expected.max(1.0));
    }

    #[test]
    fn gaussian8_widths() {
        let ks = gaussian8_kernels(4).unwrap();
        assert_eq!(ks.len(), 8);
        assert!((ks[0].0 - 1.8).abs() < 1e-12);
        assert!((ks[7].0 - 3.2).abs() < 1e-12);
        for w in ks.windows(2) {
            assert!((w[1].0 - w[0].0 - 0.2).abs() < 1e-12);
        }
        assert!(gaussian8_kernels(2).is_err());
    }
}
