//! Parameter initialisers: fan-in Kaiming normal for convolutions, uniform
//! `±1/sqrt(fan_in)` for dense layers.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{Real, Tensor};

/// Kaiming-normal conv weights `[c_out, c_in, k, k]` scaled by `gain`.
pub fn conv_weight<T: Real>(
    c_out: usize,
    c_in: usize,
    k: usize,
    gain: f64,
    rng: &mut impl Rng,
) -> Tensor<T> {
    let fan_in = (c_in * k * k) as f64;
    let std = gain * (2.0 / fan_in).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let data = (0..c_out * c_in * k * k)
        .map(|_| T::from_f64(normal.sample(rng)).unwrap())
        .collect();
    Tensor::from_vec(&[c_out, c_in, k, k], data).expect("length matches shape")
}

/// Uniform `±1/sqrt(fan_in)` tensor of the given shape.
pub fn uniform_fan_in<T: Real>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64(rng.random_range(-bound..bound)).unwrap())
        .collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}
