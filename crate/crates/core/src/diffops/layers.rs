//! Dense layer, global average pooling and ReLU.

use super::tensor::{gemm, lit, Op, Real, Tensor};
use crate::error::{Error, Result};

/// Gradients of [`linear`].
#[derive(Debug, Clone)]
pub struct LinearGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

fn check_linear<T: Real>(x: &Tensor<T>, w: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let (n, fin) = x.dims2()?;
    let (fout, win) = w.dims2()?;
    if win != fin {
        return Err(Error::shape(format!(
            "linear weight {:?} does not accept {fin} inputs",
            w.shape()
        )));
    }
    Ok((n, fin, fout))
}

/// `y = W·x + b` for every row of `x` (`[N, in]`); `w` is `[out, in]`.
pub fn linear<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, fin, fout) = check_linear(x, w)?;
    if b.numel() != fout {
        return Err(Error::shape(format!(
            "linear bias has {} entries, expected {fout}",
            b.numel()
        )));
    }
    let mut y = Tensor::zeros(&[n, fout]);
    for row in y.data_mut().chunks_mut(fout) {
        row.copy_from_slice(b.data());
    }
    gemm(
        n,
        fin,
        fout,
        x.data(),
        Op::N,
        w.data(),
        Op::T,
        T::one(),
        y.data_mut(),
    );
    Ok(y)
}

pub fn linear_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<LinearGrads<T>> {
    let (n, fin, fout) = check_linear(x, w)?;
    if dy.shape() != [n, fout] {
        return Err(Error::shape(format!(
            "linear output gradient {:?}, expected [{n}, {fout}]",
            dy.shape()
        )));
    }
    let mut dx = Tensor::zeros(&[n, fin]);
    gemm(
        n,
        fout,
        fin,
        dy.data(),
        Op::N,
        w.data(),
        Op::N,
        T::zero(),
        dx.data_mut(),
    );
    let mut dw = Tensor::zeros(&[fout, fin]);
    gemm(
        fout,
        n,
        fin,
        dy.data(),
        Op::T,
        x.data(),
        Op::N,
        T::zero(),
        dw.data_mut(),
    );
    let mut db = Tensor::zeros(&[fout]);
    for row in dy.data().chunks(fout) {
        for (g, &v) in db.data_mut().iter_mut().zip(row) {
            *g = *g + v;
        }
    }
    Ok(LinearGrads {
        input: dx,
        weight: dw,
        bias: db,
    })
}

/// Mean over the spatial axes: `[N, C, H, W]` → `[N, C]`.
pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    if h == 0 || w == 0 {
        return Err(Error::shape("global_avg_pool needs H, W >= 1"));
    }
    let hw = h * w;
    let inv = T::one() / lit::<T>(hw as f64);
    let data = x
        .data()
        .chunks(hw)
        .map(|plane| plane.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor::from_vec(&[n, c], data)
}

/// Spreads `dy` (`[N, C]`) uniformly over an `input_shape` feature map.
pub fn global_avg_pool_backward<T: Real>(
    input_shape: &[usize],
    dy: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = match *input_shape {
        [n, c, h, w] => (n, c, h, w),
        _ => {
            return Err(Error::shape(format!(
                "expected 4-D shape, got {input_shape:?}"
            )))
        }
    };
    if dy.shape() != [n, c] {
        return Err(Error::shape(format!(
            "pool gradient {:?}, expected [{n}, {c}]",
            dy.shape()
        )));
    }
    let hw = h * w;
    let inv = T::one() / lit::<T>(hw as f64);
    let mut dx = Tensor::zeros(input_shape);
    for (plane, &g) in dx.data_mut().chunks_mut(hw).zip(dy.data()) {
        plane.fill(g * inv);
    }
    Ok(dx)
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes `dy` where the forward input was positive; zero elsewhere.
pub fn relu_backward<T: Real>(x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    x.check_same_shape(dy, "relu gradient")?;
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(x.shape(), data)
}
