use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::SrModel;
use crate::degradation::{degrade, DegradationSpec, NamedImage};
use crate::error::{Error, Result};

pub const MIN_SEPARABILITY_IMAGES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub sigmas: Vec<f64>,
    pub images: usize,
    /// Mean distance between vectors of different classes (distinct images).
    pub inter: f64,
    /// Mean distance between vectors of the same class (distinct images).
    pub intra: f64,
    pub ratio: f64,
}

fn dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| f64::from(x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// How well the guidance vector `D` separates blur widths. Each entry of
/// `sigmas` is one class; every image is degraded (isotropic, noise-free) once
/// per class. The ratio compares mean Euclidean distance over cross-class
/// pairs to that over same-class pairs, both restricted to pairs of distinct
/// images so that image content affects the two averages equally.
pub fn idr_separability(
    model: &SrModel,
    hr: &[NamedImage],
    sigmas: &[f64],
    seed: u64,
) -> Result<SeparabilityReport> {
    if sigmas.len() < 2 {
        return Err(Error::invalid("separability needs at least two classes"));
    }
    if hr.len() < MIN_SEPARABILITY_IMAGES {
        return Err(Error::invalid(format!(
            "separability needs at least {MIN_SEPARABILITY_IMAGES} images, got {}",
            hr.len()
        )));
    }
    let mut vectors: Vec<Vec<Vec<f32>>> = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let spec = DegradationSpec::isotropic(sigma, 4, 0.0)?;
        let mut class = Vec::with_capacity(hr.len());
        for item in hr {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let image = item.image.crop_to_multiple(spec.scale)?;
            let lr = degrade(&image, &spec, &mut rng)?;
            class.push(model.estimate(&lr, Some(&image))?.d.into_data());
        }
        vectors.push(class);
    }
    let n = hr.len();
    let (mut intra_sum, mut intra_n) = (0.0, 0usize);
    let (mut inter_sum, mut inter_n) = (0.0, 0usize);
    for a in 0..sigmas.len() {
        for b in a..sigmas.len() {
            for i in 0..n {
                for j in 0..n {
                    if i == j || (a == b && j < i) {
                        continue;
                    }
                    let d = dist(&vectors[a][i], &vectors[b][j]);
                    if a == b {
                        intra_sum += d;
                        intra_n += 1;
                    } else {
                        inter_sum += d;
                        inter_n += 1;
                    }
                }
            }
        }
    }
    let intra = intra_sum / intra_n as f64;
    let inter = inter_sum / inter_n as f64;
    if intra.is_nan() || intra <= 0.0 {
        return Err(Error::invalid(
            "degradation vectors do not vary within classes",
        ));
    }
    Ok(SeparabilityReport {
        sigmas: sigmas.to_vec(),
        images: n,
        inter,
        intra,
        ratio: inter / intra,
    })
}
