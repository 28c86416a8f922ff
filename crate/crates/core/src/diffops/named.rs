//! Layer helpers that look up `<name>.weight` / `<name>.bias` in a
//! [`ParamSet`] and accumulate gradients under the same names.

use super::conv::{conv2d_backward, conv2d_counted};
use super::layers::{linear, linear_backward};
use super::params::ParamSet;
use super::tensor::{Real, Tensor};
use crate::error::Result;

pub fn weight_name(layer: &str) -> String {
    format!("{layer}.weight")
}

pub fn bias_name(layer: &str) -> String {
    format!("{layer}.bias")
}

/// Forward convolution; returns the output and its multiply-accumulate count.
pub fn conv<T: Real>(params: &ParamSet<T>, layer: &str, x: &Tensor<T>) -> Result<(Tensor<T>, u64)> {
    conv2d_counted(
        x,
        params.get(&weight_name(layer))?,
        params.get(&bias_name(layer))?,
    )
}

/// Accumulates the convolution's parameter gradients into `grads` and returns
/// the input gradient when requested.
pub fn conv_backward<T: Real>(
    params: &ParamSet<T>,
    layer: &str,
    x: &Tensor<T>,
    dy: &Tensor<T>,
    grads: &mut ParamSet<T>,
    want_input_grad: bool,
) -> Result<Option<Tensor<T>>> {
    let w_name = weight_name(layer);
    let g = conv2d_backward(x, params.get(&w_name)?, dy, want_input_grad)?;
    grads.add_to(&w_name, &g.weight)?;
    grads.add_to(&bias_name(layer), &g.bias)?;
    Ok(g.input)
}

pub fn dense<T: Real>(params: &ParamSet<T>, layer: &str, x: &Tensor<T>) -> Result<Tensor<T>> {
    linear(
        x,
        params.get(&weight_name(layer))?,
        params.get(&bias_name(layer))?,
    )
}

pub fn dense_backward<T: Real>(
    params: &ParamSet<T>,
    layer: &str,
    x: &Tensor<T>,
    dy: &Tensor<T>,
    grads: &mut ParamSet<T>,
) -> Result<Tensor<T>> {
    let w_name = weight_name(layer);
    let g = linear_backward(x, params.get(&w_name)?, dy)?;
    grads.add_to(&w_name, &g.weight)?;
    grads.add_to(&bias_name(layer), &g.bias)?;
    Ok(g.input)
}
