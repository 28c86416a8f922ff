//! Ordinary and depthwise 2-D convolution (cross-correlation, zero padding,
//! stride 1, same spatial size) with their backward passes.

use super::tensor::{gemm, Op, Real, Tensor};
use crate::error::{Error, Result};

/// Gradients of [`conv2d`].
#[derive(Debug, Clone)]
pub struct Conv2dGrads<T> {
    /// `None` when the caller did not ask for the input gradient.
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

fn check_conv(
    x: &Tensor<impl Real>,
    w_shape: &[usize],
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (n, c_in, h, wd) = x.dims4()?;
    let (c_out, wc_in, kh, kw) = match *w_shape {
        [a, b, c, d] => (a, b, c, d),
        _ => {
            return Err(Error::shape(format!(
                "conv weight must be 4-D, got {w_shape:?}"
            )))
        }
    };
    if kh != kw || kh % 2 == 0 {
        return Err(Error::shape(format!(
            "conv kernel must be square and odd, got {kh}x{kw}"
        )));
    }
    if wc_in != c_in {
        return Err(Error::shape(format!(
            "conv expects {wc_in} input channels, input has {c_in}"
        )));
    }
    Ok((n, c_in, h, wd, c_out, kh))
}

fn im2col<T: Real>(x: &[T], c_in: usize, h: usize, w: usize, k: usize, col: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c_in {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * hw..][..hw];
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x, d) in dst.iter_mut().enumerate() {
                        let sx = x as isize + dx;
                        *d = if sx < 0 || sx >= w as isize {
                            T::zero()
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(col: &[T], c_in: usize, h: usize, w: usize, k: usize, dx_out: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c_in {
        let plane = &mut dx_out[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * hw..][..hw];
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x, &g) in row[y * w..(y + 1) * w].iter().enumerate() {
                        let sx = x as isize + dx;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] = dst[sx as usize] + g;
                        }
                    }
                }
            }
        }
    }
}

/// Same-size convolution: `x` is `[N, C_in, H, W]`, `w` is `[C_out, C_in, K, K]`,
/// `b` has `C_out` entries. Returns `[N, C_out, H, W]`.
pub fn conv2d<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    conv2d_counted(x, w, b).map(|(y, _)| y)
}

/// [`conv2d`] that also reports the multiply-accumulates it executed.
pub fn conv2d_counted<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<(Tensor<T>, u64)> {
    let (n, c_in, h, wd, c_out, k) = check_conv(x, w.shape())?;
    if b.numel() != c_out {
        return Err(Error::shape(format!(
            "conv bias has {} entries, expected {c_out}",
            b.numel()
        )));
    }
    let hw = h * wd;
    let kk = c_in * k * k;
    let mut out = Tensor::zeros(&[n, c_out, h, wd]);
    let mut col = vec![T::zero(); kk * hw];
    let mut macs = 0u64;
    for i in 0..n {
        let xi = &x.data()[i * c_in * hw..(i + 1) * c_in * hw];
        let yi = &mut out.data_mut()[i * c_out * hw..(i + 1) * c_out * hw];
        for (co, &bias) in b.data().iter().enumerate() {
            yi[co * hw..(co + 1) * hw].fill(bias);
        }
        if k == 1 {
            gemm(c_out, kk, hw, w.data(), Op::N, xi, Op::N, T::one(), yi);
        } else {
            im2col(xi, c_in, h, wd, k, &mut col);
            gemm(c_out, kk, hw, w.data(), Op::N, &col, Op::N, T::one(), yi);
        }
        macs += (c_out * kk * hw) as u64;
    }
    Ok((out, macs))
}

/// Backward pass of [`conv2d`] given the forward input `x`, weights `w` and the
/// output gradient `dy`.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    want_input_grad: bool,
) -> Result<Conv2dGrads<T>> {
    let (n, c_in, h, wd, c_out, k) = check_conv(x, w.shape())?;
    if dy.shape() != [n, c_out, h, wd] {
        return Err(Error::shape(format!(
            "conv output gradient {:?}, expected {:?}",
            dy.shape(),
            [n, c_out, h, wd]
        )));
    }
    let hw = h * wd;
    let kk = c_in * k * k;
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(&[c_out]);
    let mut dx = want_input_grad.then(|| Tensor::zeros(x.shape()));
    let mut col = vec![T::zero(); kk * hw];
    let mut dcol = vec![T::zero(); kk * hw];
    for i in 0..n {
        let xi = &x.data()[i * c_in * hw..(i + 1) * c_in * hw];
        let dyi = &dy.data()[i * c_out * hw..(i + 1) * c_out * hw];
        for (co, g) in db.data_mut().iter_mut().enumerate() {
            *g = *g + dyi[co * hw..(co + 1) * hw].iter().copied().sum();
        }
        let src: &[T] = if k == 1 {
            xi
        } else {
            im2col(xi, c_in, h, wd, k, &mut col);
            &col
        };
        // dW += dY · colᵀ
        gemm(
            c_out,
            hw,
            kk,
            dyi,
            Op::N,
            src,
            Op::T,
            T::one(),
            dw.data_mut(),
        );
        if let Some(dx) = dx.as_mut() {
            let dxi = &mut dx.data_mut()[i * c_in * hw..(i + 1) * c_in * hw];
            if k == 1 {
                gemm(kk, c_out, hw, w.data(), Op::T, dyi, Op::N, T::one(), dxi);
            } else {
                gemm(
                    kk,
                    c_out,
                    hw,
                    w.data(),
                    Op::T,
                    dyi,
                    Op::N,
                    T::zero(),
                    &mut dcol,
                );
                col2im(&dcol, c_in, h, wd, k, dxi);
            }
        }
    }
    Ok(Conv2dGrads {
        input: dx,
        weight: dw,
        bias: db,
    })
}

/// Gradients of [`depthwise_conv2d`].
#[derive(Debug, Clone)]
pub struct DepthwiseGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
}

fn check_depthwise(
    x: &Tensor<impl Real>,
    w_shape: &[usize],
) -> Result<(usize, usize, usize, usize, usize)> {
    let (n, c, h, wd) = x.dims4()?;
    match *w_shape {
        [wn, wc, 1, kh, kw] if wn == n && wc == c && kh == kw && kh % 2 == 1 => {
            Ok((n, c, h, wd, kh))
        }
        _ => Err(Error::shape(format!(
            "depthwise weights must be [N={n}, C={c}, 1, K, K] with odd K, got {w_shape:?}"
        ))),
    }
}

/// Per-sample depthwise convolution: channel `i` of sample `b` is correlated
/// with its own `K×K` kernel `w[b, i, 0]`. `x` is `[N, C, H, W]`, `w` is
/// `[N, C, 1, K, K]`. Zero padding, same size.
///
/// Returns the output and the number of multiply-accumulates executed; taps
/// that fall on padding are skipped and not counted.
pub fn depthwise_conv2d<T: Real>(x: &Tensor<T>, w: &Tensor<T>) -> Result<(Tensor<T>, u64)> {
    let (n, c, h, wd, k) = check_depthwise(x, w.shape())?;
    let pad = (k / 2) as isize;
    let hw = h * wd;
    let mut out = Tensor::zeros(x.shape());
    let mut macs = 0u64;
    for plane in 0..n * c {
        let src = &x.data()[plane * hw..(plane + 1) * hw];
        let ker = &w.data()[plane * k * k..(plane + 1) * k * k];
        let dst = &mut out.data_mut()[plane * hw..(plane + 1) * hw];
        for ky in 0..k {
            let oy = ky as isize - pad;
            let y_lo = (-oy).max(0) as usize;
            let y_hi = (h as isize - oy).min(h as isize).max(0) as usize;
            for kx in 0..k {
                let ox = kx as isize - pad;
                let x_lo = (-ox).max(0) as usize;
                let x_hi = (wd as isize - ox).min(wd as isize).max(0) as usize;
                if x_lo >= x_hi {
                    continue;
                }
                let wv = ker[ky * k + kx];
                for y in y_lo..y_hi {
                    let sy = (y as isize + oy) as usize;
                    let srow = &src[sy * wd..(sy + 1) * wd];
                    let drow = &mut dst[y * wd..(y + 1) * wd];
                    for x in x_lo..x_hi {
                        drow[x] = drow[x] + wv * srow[(x as isize + ox) as usize];
                    }
                }
                macs += ((y_hi.saturating_sub(y_lo)) * (x_hi - x_lo)) as u64;
            }
        }
    }
    Ok((out, macs))
}

/// Backward pass of [`depthwise_conv2d`].
pub fn depthwise_conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<DepthwiseGrads<T>> {
    let (n, c, h, wd, k) = check_depthwise(x, w.shape())?;
    dy.check_same_shape(x, "depthwise output gradient")?;
    let pad = (k / 2) as isize;
    let hw = h * wd;
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(w.shape());
    for plane in 0..n * c {
        let src = &x.data()[plane * hw..(plane + 1) * hw];
        let g = &dy.data()[plane * hw..(plane + 1) * hw];
        let ker = &w.data()[plane * k * k..(plane + 1) * k * k];
        let dsrc = &mut dx.data_mut()[plane * hw..(plane + 1) * hw];
        let mut dker = vec![T::zero(); k * k];
        for ky in 0..k {
            let oy = ky as isize - pad;
            let y_lo = (-oy).max(0) as usize;
            let y_hi = (h as isize - oy).min(h as isize).max(0) as usize;
            for kx in 0..k {
                let ox = kx as isize - pad;
                let x_lo = (-ox).max(0) as usize;
                let x_hi = (wd as isize - ox).min(wd as isize).max(0) as usize;
                let wv = ker[ky * k + kx];
                let mut acc = T::zero();
                for y in y_lo..y_hi {
                    let sy = (y as isize + oy) as usize;
                    for x in x_lo..x_hi {
                        let sx = (x as isize + ox) as usize;
                        let gv = g[y * wd + x];
                        acc = acc + gv * src[sy * wd + sx];
                        dsrc[sy * wd + sx] = dsrc[sy * wd + sx] + wv * gv;
                    }
                }
                dker[ky * k + kx] = acc;
            }
        }
        dw.data_mut()[plane * k * k..(plane + 1) * k * k].copy_from_slice(&dker);
    }
    Ok(DepthwiseGrads {
        input: dx,
        weight: dw,
    })
}
