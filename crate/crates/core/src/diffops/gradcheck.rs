//! Central finite-difference gradient checking in double precision.
//!
//! Relative error between an analytic entry `a` and a numeric entry `n` is
//! `|a - n| / max(|a|, |n|, 1e-8)`; checks report the maximum over entries.

use rand::Rng;

use super::tensor::Tensor;

/// Floor of the relative-error denominator.
pub const REL_ERR_FLOOR: f64 = 1e-8;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Tensor with entries drawn uniformly from `[-1, 1)`.
pub fn random_tensor<T: super::Real>(shape: &[usize], rng: &mut impl Rng) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64(rng.random_range(-1.0..1.0)).unwrap())
        .collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

/// `(f(x + eps e_i) - f(x - eps e_i)) / 2eps` for every entry `i` of `x`.
pub fn numeric_gradient(
    x: &Tensor<f64>,
    eps: f64,
    mut f: impl FnMut(&Tensor<f64>) -> f64,
) -> Tensor<f64> {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (plus - minus) / (2.0 * eps);
    }
    grad
}

/// Maximum relative error between two gradients of equal shape.
pub fn max_rel_error(analytic: &Tensor<f64>, numeric: &Tensor<f64>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shapes differ");
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| rel_error(a, n))
        .fold(0.0, f64::max)
}

/// Compares `analytic` with the numeric gradient of `f` at `x`.
pub fn check_gradient(
    x: &Tensor<f64>,
    analytic: &Tensor<f64>,
    eps: f64,
    f: impl FnMut(&Tensor<f64>) -> f64,
) -> f64 {
    max_rel_error(analytic, &numeric_gradient(x, eps, f))
}
