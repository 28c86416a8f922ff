use std::path::Path;

use image::{DynamicImage, ImageReader, RgbImage};

use crate::diffops::{Real, Tensor};
use crate::error::{Error, Result};

/// Channel-major raster with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    /// Builds an image, rejecting empty dimensions and values outside `[0, 1]`.
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::shape(format!(
                "image dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "{channels}x{height}x{width} image needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("image value {v} outside [0, 1]")));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(
            channels,
            height,
            width,
            vec![value; channels * height * width],
        )
    }

    /// Clamps every value into `[0, 1]` (NaN becomes 0).
    pub fn from_unclamped(
        channels: usize,
        height: usize,
        width: usize,
        mut data: Vec<f32>,
    ) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(channels, height, width, data)
    }

    /// Batch item `index` of a `[N, C, H, W]` tensor, clamped into `[0, 1]`.
    pub fn from_tensor<T: Real>(t: &Tensor<T>, index: usize) -> Result<Self> {
        let (_, c, h, w) = t.dims4()?;
        let item = t.item(index)?;
        let data = item
            .data()
            .iter()
            .map(|v| v.to_f32().unwrap_or(f32::NAN))
            .collect();
        Self::from_unclamped(c, h, w, data)
    }

    /// `[1, C, H, W]` tensor copy.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let data = self.data.iter().map(|&v| T::from_f32(v).unwrap()).collect();
        Tensor::from_vec(&[1, self.channels, self.height, self.width], data)
            .expect("image length matches its shape")
    }

    /// Stacks equally sized images into a `[N, C, H, W]` tensor.
    pub fn batch_to_tensor<T: Real>(images: &[Image]) -> Result<Tensor<T>> {
        let items: Vec<Tensor<T>> = images.iter().map(Image::to_tensor).collect();
        Tensor::stack(&items)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let hw = self.height * self.width;
        &self.data[c * hw..(c + 1) * hw]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Copies the `h×w` window whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 || top + h > self.height || left + w > self.width {
            return Err(Error::shape(format!(
                "crop {h}x{w} at ({top}, {left}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            let plane = self.plane(c);
            for y in top..top + h {
                data.extend_from_slice(&plane[y * self.width + left..y * self.width + left + w]);
            }
        }
        Ok(Self {
            channels: self.channels,
            height: h,
            width: w,
            data,
        })
    }

    /// Largest top-left crop whose sides are multiples of `m`.
    pub fn crop_to_multiple(&self, m: usize) -> Result<Self> {
        let h = self.height / m * m;
        let w = self.width / m * m;
        self.crop(0, 0, h, w)
    }

    /// Reads an 8-bit RGB PNG; values are `raw / 255`.
    pub fn read_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
        let decoded = reader
            .with_guessed_format()
            .map_err(|e| Error::io(path, e))?
            .decode()?;
        let rgb = match decoded {
            DynamicImage::ImageRgb8(buf) => buf,
            other => {
                return Err(Error::UnsupportedImage {
                    path: path.to_owned(),
                    reason: format!("expected 8-bit RGB, found {:?}", other.color()),
                })
            }
        };
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let mut data = vec![0f32; 3 * h * w];
        for (x, y, px) in rgb.enumerate_pixels() {
            for c in 0..3 {
                data[(c * h + y as usize) * w + x as usize] = f32::from(px.0[c]) / 255.0;
            }
        }
        Self::new(3, h, w, data)
    }

    /// Writes an 8-bit RGB PNG, quantising with `round(v * 255)`.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if self.channels != 3 {
            return Err(Error::UnsupportedImage {
                path: path.to_owned(),
                reason: format!("can only write 3-channel images, got {}", self.channels),
            });
        }
        let (h, w) = (self.height, self.width);
        let mut buf = RgbImage::new(w as u32, h as u32);
        for (x, y, px) in buf.enumerate_pixels_mut() {
            for c in 0..3 {
                let v = self.data[(c * h + y as usize) * w + x as usize];
                px.0[c] = (v * 255.0).round().clamp(0.0, 255.0) as u8;
            }
        }
        buf.save(path).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image(other),
        })
    }
}
