//! `y = (x ⊗ k)↓s + n`: blur with reflection padding, keep every `s`-th pixel
//! starting at index 0, add white Gaussian noise, clamp.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::kernel::BlurKernel;
use super::sample::DegradationSpec;
use crate::diffops::Tensor;
use crate::error::{Error, Result};
use crate::imaging::Image;

/// Mirror index into `[0, n)` without repeating the edge sample.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m >= n as isize { period - m } else { m }) as usize
}

/// Blur (correlation, reflection padding) evaluated only at the kept sample
/// positions. Returns an unclamped `[1, C, H/s, W/s]` tensor.
pub fn blur_decimate(hr: &Image, kernel: &BlurKernel, scale: usize) -> Result<Tensor<f64>> {
    let (c, h, w) = (hr.channels(), hr.height(), hr.width());
    if scale == 0 || h % scale != 0 || w % scale != 0 {
        return Err(Error::shape(format!(
            "{h}x{w} image is not divisible by scale {scale}"
        )));
    }
    let (oh, ow) = (h / scale, w / scale);
    let k = kernel.size();
    let pad = (k / 2) as isize;
    let weights = kernel.weights();
    let mut out = Tensor::zeros(&[1, c, oh, ow]);
    // column indices are shared by every row
    let cols: Vec<Vec<usize>> = (0..ow)
        .map(|x| {
            (0..k)
                .map(|kx| reflect((x * scale) as isize + kx as isize - pad, w))
                .collect()
        })
        .collect();
    for ch in 0..c {
        let plane = hr.plane(ch);
        let dst = &mut out.data_mut()[ch * oh * ow..(ch + 1) * oh * ow];
        for y in 0..oh {
            let rows: Vec<usize> = (0..k)
                .map(|ky| reflect((y * scale) as isize + ky as isize - pad, h))
                .collect();
            for (x, col_idx) in cols.iter().enumerate() {
                let mut acc = 0.0;
                for (ky, &sy) in rows.iter().enumerate() {
                    let row = &plane[sy * w..(sy + 1) * w];
                    let wrow = &weights[ky * k..(ky + 1) * k];
                    for (wv, &sx) in wrow.iter().zip(col_idx) {
                        acc += wv * f64::from(row[sx]);
                    }
                }
                dst[y * ow + x] = acc;
            }
        }
    }
    Ok(out)
}

/// Applies the full degradation. Noise is drawn from `rng` only when
/// `spec.noise_sigma > 0`.
pub fn degrade(hr: &Image, spec: &DegradationSpec, rng: &mut impl Rng) -> Result<Image> {
    let mut lr = blur_decimate(hr, &spec.kernel, spec.scale)?;
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma / 255.0)
            .map_err(|e| Error::invalid(format!("noise sigma: {e}")))?;
        for v in lr.data_mut() {
            *v += normal.sample(rng);
        }
    }
    let (_, c, h, w) = lr.dims4()?;
    Image::from_unclamped(c, h, w, lr.data().iter().map(|&v| v as f32).collect())
}
