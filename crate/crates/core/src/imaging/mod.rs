//! Image I/O, luma conversion, pixel (un)shuffle and Y-channel metrics.

mod image;
pub mod metrics;
pub mod shuffle;

pub use self::image::Image;
pub use metrics::{
    psnr_y, psnr_y_capped, rgb_to_y, ssim_y, write_metrics_csv, ImageMetrics, DEFAULT_PSNR_CAP,
};
pub use shuffle::{pixel_shuffle, pixel_unshuffle, shuffle_image, unshuffle_image};
