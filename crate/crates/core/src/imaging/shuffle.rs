//! Space-to-depth (`pixel_unshuffle`) and its inverse (`pixel_shuffle`).
//!
//! Index map: `out[c·r² + dy·r + dx, y, x] = in[c, y·r + dy, x·r + dx]`.

use super::image::Image;
use crate::diffops::{Real, Tensor};
use crate::error::{Error, Result};

/// `[N, C, H·r, W·r]` → `[N, C·r², H, W]`.
pub fn pixel_unshuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(Error::shape(format!(
            "pixel_unshuffle: {h}x{w} not divisible by {r}"
        )));
    }
    let (oh, ow) = (h / r, w / r);
    let mut out = Tensor::zeros(&[n, c * r * r, oh, ow]);
    let src = x.data();
    let dst = out.data_mut();
    for b in 0..n {
        for ci in 0..c {
            for dy in 0..r {
                for dx in 0..r {
                    let oc = ci * r * r + dy * r + dx;
                    let obase = (b * c * r * r + oc) * oh * ow;
                    let ibase = (b * c + ci) * h * w;
                    for y in 0..oh {
                        for xx in 0..ow {
                            dst[obase + y * ow + xx] = src[ibase + (y * r + dy) * w + xx * r + dx];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `[N, C·r², H, W]` → `[N, C, H·r, W·r]`; exact inverse of [`pixel_unshuffle`].
pub fn pixel_shuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (n, cr, h, w) = x.dims4()?;
    if r == 0 || cr % (r * r) != 0 {
        return Err(Error::shape(format!(
            "pixel_shuffle: {cr} channels not divisible by {}",
            r * r
        )));
    }
    let c = cr / (r * r);
    let (oh, ow) = (h * r, w * r);
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let src = x.data();
    let dst = out.data_mut();
    for b in 0..n {
        for ci in 0..c {
            for dy in 0..r {
                for dx in 0..r {
                    let ic = ci * r * r + dy * r + dx;
                    let ibase = (b * cr + ic) * h * w;
                    let obase = (b * c + ci) * oh * ow;
                    for y in 0..h {
                        for xx in 0..w {
                            dst[obase + (y * r + dy) * ow + xx * r + dx] = src[ibase + y * w + xx];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// [`pixel_unshuffle`] on an image; the result has `C·r²` channels.
pub fn unshuffle_image(img: &Image, r: usize) -> Result<Image> {
    let t = pixel_unshuffle(&img.to_tensor::<f32>(), r)?;
    Image::from_tensor(&t, 0)
}

/// [`pixel_shuffle`] on an image with `C·r²` channels.
pub fn shuffle_image(img: &Image, r: usize) -> Result<Image> {
    let t = pixel_shuffle(&img.to_tensor::<f32>(), r)?;
    Image::from_tensor(&t, 0)
}
