//! Luma conversion and Y-channel PSNR / SSIM.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::image::Image;
use crate::error::{Error, Result};

/// PSNR reported for identical images.
pub const DEFAULT_PSNR_CAP: f64 = 100.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// BT.601 studio-range luma of each pixel, in double precision.
pub(crate) fn luma_plane(img: &Image) -> Result<Vec<f64>> {
    if img.channels() != 3 {
        return Err(Error::shape(format!(
            "Y conversion needs 3 channels, got {}",
            img.channels()
        )));
    }
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    Ok(r.iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| {
            let y = (65.481 * f64::from(r) + 128.553 * f64::from(g) + 24.966 * f64::from(b) + 16.0)
                / 255.0;
            y.clamp(0.0, 1.0)
        })
        .collect())
}

/// `Y = (65.481 R + 128.553 G + 24.966 B + 16) / 255`.
pub fn rgb_to_y(img: &Image) -> Result<Image> {
    let y = luma_plane(img)?;
    Image::from_unclamped(
        1,
        img.height(),
        img.width(),
        y.into_iter().map(|v| v as f32).collect(),
    )
}

fn cropped_luma(a: &Image, b: &Image, border: usize) -> Result<(Vec<f64>, Vec<f64>, usize, usize)> {
    if (a.channels(), a.height(), a.width()) != (b.channels(), b.height(), b.width()) {
        return Err(Error::shape(format!(
            "metric inputs differ: {}x{}x{} vs {}x{}x{}",
            a.channels(),
            a.height(),
            a.width(),
            b.channels(),
            b.height(),
            b.width()
        )));
    }
    let (h, w) = (a.height(), a.width());
    if 2 * border >= h || 2 * border >= w {
        return Err(Error::invalid(format!(
            "border {border} leaves nothing of a {h}x{w} image"
        )));
    }
    let crop = |plane: Vec<f64>| -> Vec<f64> {
        (border..h - border)
            .flat_map(|y| plane[y * w + border..y * w + w - border].to_vec())
            .collect()
    };
    Ok((
        crop(luma_plane(a)?),
        crop(luma_plane(b)?),
        h - 2 * border,
        w - 2 * border,
    ))
}

/// Y-channel PSNR with the default 100 dB cap.
pub fn psnr_y(reference: &Image, test: &Image, border: usize) -> Result<f64> {
    psnr_y_capped(reference, test, border, DEFAULT_PSNR_CAP)
}

/// `10·log10(1 / MSE)` on the luma planes after cropping `border` pixels from
/// every side; `cap` when the planes are identical.
pub fn psnr_y_capped(reference: &Image, test: &Image, border: usize, cap: f64) -> Result<f64> {
    let (a, b, _, _) = cropped_luma(reference, test, border)?;
    let mse = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    Ok(if mse == 0.0 { cap } else { -10.0 * mse.log10() })
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Separable "valid" filtering with the SSIM window.
fn filter_valid(plane: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW)
                .map(|k| g[k] * rows[(y + k) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean SSIM of the luma planes (11×11 Gaussian window, σ = 1.5, dynamic
/// range 1) after cropping `border` pixels from every side.
pub fn ssim_y(reference: &Image, test: &Image, border: usize) -> Result<f64> {
    let (a, b, h, w) = cropped_luma(reference, test, border)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} after cropping, got {h}x{w}"
        )));
    }
    let g = gaussian_window();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = filter_valid(&a, h, w, &g);
    let mu_b = filter_valid(&b, h, w, &g);
    let e_aa = filter_valid(&prod(&a, &a), h, w, &g);
    let e_bb = filter_valid(&prod(&b, &b), h, w, &g);
    let e_ab = filter_valid(&prod(&a, &b), h, w, &g);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2))
        })
        .sum();
    Ok(total / n as f64)
}

/// One row of a per-image metric report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub image_id: String,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Writes `image_id, psnr_db, ssim` rows.
pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[ImageMetrics]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(
            3,
            h,
            w,
            (0..3 * h * w).map(|_| rng.random::<f32>()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn y_of_black_and_white() {
        let y = rgb_to_y(&Image::filled(3, 2, 3, 0.0).unwrap()).unwrap();
        assert_eq!((y.channels(), y.height(), y.width()), (1, 2, 3));
        assert!((f64::from(y.get(0, 0, 0)) - 16.0 / 255.0).abs() < 1e-7);
        let y = rgb_to_y(&Image::filled(3, 2, 3, 1.0).unwrap()).unwrap();
        assert!((f64::from(y.get(0, 1, 2)) - 235.0 / 255.0).abs() < 1e-6);
        assert!(rgb_to_y(&Image::filled(1, 2, 2, 0.0).unwrap()).is_err());
    }

    #[test]
    fn y_range_bounds() {
        let img = random_image(9, 9, 1);
        for &v in luma_plane(&img).unwrap().iter() {
            assert!((16.0 / 255.0 - 1e-12..=235.0 / 255.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn psnr_identical_is_capped() {
        let img = random_image(16, 16, 2);
        assert_eq!(psnr_y(&img, &img, 4).unwrap(), 100.0);
        assert_eq!(psnr_y_capped(&img, &img, 0, 60.0).unwrap(), 60.0);
    }

    #[test]
    fn psnr_constant_offset_is_20db() {
        // gray level g maps to Y = (219 g + 16) / 255, so ΔY = 0.1 needs Δg = 25.5 / 219
        let a = Image::filled(3, 12, 12, 0.3).unwrap();
        let b = Image::filled(3, 12, 12, 0.3 + 25.5 / 219.0).unwrap();
        let p = psnr_y(&a, &b, 2).unwrap();
        assert!((p - 20.0).abs() < 1e-5, "{p}");
    }

    #[test]
    fn psnr_matches_direct_mse_oracle() {
        for seed in 0..5 {
            let a = random_image(20, 17, 10 + seed);
            let b = random_image(20, 17, 20 + seed);
            let border = 3;
            let mut se = 0.0;
            let mut count = 0usize;
            for y in border..20 - border {
                for x in border..17 - border {
                    let ya = (65.481 * f64::from(a.get(0, y, x))
                        + 128.553 * f64::from(a.get(1, y, x))
                        + 24.966 * f64::from(a.get(2, y, x))
                        + 16.0)
                        / 255.0;
                    let yb = (65.481 * f64::from(b.get(0, y, x))
                        + 128.553 * f64::from(b.get(1, y, x))
                        + 24.966 * f64::from(b.get(2, y, x))
                        + 16.0)
                        / 255.0;
                    se += (ya - yb).powi(2);
                    count += 1;
                }
            }
            let oracle = 10.0 * (1.0 / (se / count as f64)).log10();
            let got = psnr_y(&a, &b, border).unwrap();
            assert!((got - oracle).abs() < 1e-6);
            assert_eq!(got, psnr_y(&b, &a, border).unwrap());
        }
    }

    #[test]
    fn psnr_rejects_mismatch() {
        assert!(psnr_y(&random_image(8, 8, 1), &random_image(8, 9, 1), 0).is_err());
        assert!(psnr_y(&random_image(8, 8, 1), &random_image(8, 8, 2), 4).is_err());
    }

    /// Direct per-window SSIM with explicit 2-D weights.
    fn ssim_oracle(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
        let g = gaussian_window();
        let mut total = 0.0;
        let mut n = 0;
        for y0 in 0..=h - 11 {
            for x0 in 0..=w - 11 {
                let (mut ma, mut mb) = (0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let wt = g[i] * g[j];
                        ma += wt * a[(y0 + i) * w + x0 + j];
                        mb += wt * b[(y0 + i) * w + x0 + j];
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let wt = g[i] * g[j];
                        let da = a[(y0 + i) * w + x0 + j] - ma;
                        let db = b[(y0 + i) * w + x0 + j] - mb;
                        va += wt * da * da;
                        vb += wt * db * db;
                        cov += wt * da * db;
                    }
                }
                total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
                n += 1;
            }
        }
        total / n as f64
    }

    #[test]
    fn ssim_identity_and_constants() {
        let img = random_image(20, 20, 3);
        assert!((ssim_y(&img, &img, 2).unwrap() - 1.0).abs() < 1e-12);
        let c = Image::filled(3, 16, 16, 0.4).unwrap();
        assert!((ssim_y(&c, &c, 0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_negated_matches_oracle() {
        let img = random_image(18, 19, 4);
        let neg = Image::new(3, 18, 19, img.data().iter().map(|v| 1.0 - v).collect()).unwrap();
        let got = ssim_y(&img, &neg, 1).unwrap();
        assert!(got < 1.0);
        let (a, b, h, w) = cropped_luma(&img, &neg, 1).unwrap();
        assert!((got - ssim_oracle(&a, &b, h, w)).abs() < 1e-6);
    }

    #[test]
    fn ssim_too_small_errors() {
        let img = random_image(12, 12, 5);
        assert!(ssim_y(&img, &img, 1).is_err());
    }

    #[test]
    fn metrics_csv_has_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metrics_csv(
            &p,
            &[ImageMetrics {
                image_id: "a".into(),
                psnr_db: 30.0,
                ssim: 0.9,
            }],
        )
        .unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("image_id,psnr_db,ssim\n"));
    }
}
