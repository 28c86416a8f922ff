//! HR image folders, procedural HR textures and the on-disk HR/LR dataset
//! layout (`HR/*.png`, `LR/*.png`, `degradations.csv`).

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::degrade::degrade;
use super::sample::{DegradationMode, KernelParams, SamplerConfig};
use crate::error::{Error, Result};
use crate::imaging::Image;

/// An image together with its file stem.
#[derive(Debug, Clone)]
pub struct NamedImage {
    pub id: String,
    pub image: Image,
}

/// Loads every `*.png` in `dir`, sorted by file name.
pub fn load_png_dir(dir: impl AsRef<Path>) -> Result<Vec<NamedImage>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|ext| ext.eq_ignore_ascii_case("png"))
        })
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let id = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Image::read_png(&p).map(|image| NamedImage { id, image })
        })
        .collect()
}

/// Writes images as `<dir>/<id>.png`, creating `dir`.
pub fn write_png_dir(dir: impl AsRef<Path>, images: &[NamedImage]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for img in images {
        img.image.write_png(dir.join(format!("{}.png", img.id)))?;
    }
    Ok(())
}

fn lerp(a: [f32; 3], b: [f32; 3], t: f32) -> [f32; 3] {
    std::array::from_fn(|c| a[c] + (b[c] - a[c]) * t)
}

/// Deterministic synthetic HR image: gradient background, hard-edged shapes
/// and an oriented grating, so that blur strength is visible in the LR.
pub fn procedural_texture(size: usize, rng: &mut impl Rng) -> Result<Image> {
    let color =
        |rng: &mut dyn rand::RngCore| -> [f32; 3] { std::array::from_fn(|_| rng.random::<f32>()) };
    let bg0 = color(rng);
    let bg1 = color(rng);
    let angle: f32 = rng.random_range(0.0..std::f32::consts::TAU);
    let (ga, gb) = (angle.cos(), angle.sin());
    let n = size as f32;
    let mut px = vec![[0f32; 3]; size * size];
    for y in 0..size {
        for x in 0..size {
            let t = ((x as f32 * ga + y as f32 * gb) / n * 0.5 + 0.5).clamp(0.0, 1.0);
            px[y * size + x] = lerp(bg0, bg1, t);
        }
    }
    let shapes = rng.random_range(3..7);
    for _ in 0..shapes {
        let c = color(rng);
        let cx = rng.random_range(0.0..n);
        let cy = rng.random_range(0.0..n);
        let r = rng.random_range(n * 0.08..n * 0.3);
        let is_circle = rng.random_bool(0.5);
        for y in 0..size {
            for x in 0..size {
                let (dx, dy) = (x as f32 - cx, y as f32 - cy);
                let inside = if is_circle {
                    dx * dx + dy * dy <= r * r
                } else {
                    dx.abs() <= r && dy.abs() <= r * 0.6
                };
                if inside {
                    px[y * size + x] = c;
                }
            }
        }
    }
    let freq = rng.random_range(0.3f32..1.2);
    let theta: f32 = rng.random_range(0.0..std::f32::consts::PI);
    let amp = rng.random_range(0.1f32..0.25);
    let (fx, fy) = (theta.cos() * freq, theta.sin() * freq);
    let x0 = rng.random_range(0..size / 2);
    let y0 = rng.random_range(0..size / 2);
    for y in y0..(y0 + size / 2) {
        for x in x0..(x0 + size / 2) {
            let s = amp * (fx * x as f32 + fy * y as f32).sin();
            for v in &mut px[y * size + x] {
                *v += s;
            }
        }
    }
    let mut data = vec![0f32; 3 * size * size];
    for (i, p) in px.iter().enumerate() {
        for c in 0..3 {
            data[c * size * size + i] = p[c];
        }
    }
    Image::from_unclamped(3, size, size, data)
}

/// `count` procedural textures named `tex0000`, `tex0001`, ….
pub fn procedural_textures(count: usize, size: usize, seed: u64) -> Result<Vec<NamedImage>> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            procedural_texture(size, &mut rng).map(|image| NamedImage {
                id: format!("tex{i:04}"),
                image,
            })
        })
        .collect()
}

/// One row of `degradations.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationRecord {
    pub image_id: String,
    pub mode: String,
    pub sigma_or_lambda1: f64,
    pub lambda2: Option<f64>,
    pub theta: Option<f64>,
    pub noise_sigma: f64,
    pub scale: usize,
    pub seed: u64,
}

/// Degrades every HR image with a fresh draw seeded `base_seed + index` and
/// writes `root/HR`, `root/LR` and `root/degradations.csv`.
pub fn synthesize_dataset(
    hr: &[NamedImage],
    root: impl AsRef<Path>,
    mode: DegradationMode,
    sampler: &SamplerConfig,
    base_seed: u64,
) -> Result<Vec<DegradationRecord>> {
    let root = root.as_ref();
    if hr.is_empty() {
        return Err(Error::invalid("no HR images to synthesise from"));
    }
    let hr_dir = root.join("HR");
    let lr_dir = root.join("LR");
    for d in [&hr_dir, &lr_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut records = Vec::with_capacity(hr.len());
    for (i, item) in hr.iter().enumerate() {
        let seed = base_seed.wrapping_add(i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = sampler.sample(mode, &mut rng)?;
        let image = item.image.crop_to_multiple(spec.scale)?;
        let lr = degrade(&image, &spec, &mut rng)?;
        image.write_png(hr_dir.join(format!("{}.png", item.id)))?;
        lr.write_png(lr_dir.join(format!("{}.png", item.id)))?;
        let (a, b, t) = match spec.params {
            KernelParams::Isotropic { sigma } => (sigma, None, None),
            KernelParams::Anisotropic(s) => (s.lambda1, Some(s.lambda2), Some(s.theta)),
            KernelParams::Custom => (f64::NAN, None, None),
        };
        records.push(DegradationRecord {
            image_id: item.id.clone(),
            mode: mode.name().into(),
            sigma_or_lambda1: a,
            lambda2: b,
            theta: t,
            noise_sigma: spec.noise_sigma,
            scale: spec.scale,
            seed,
        });
    }
    let csv_path = root.join("degradations.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for r in &records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    Ok(records)
}

/// Reads `degradations.csv` back.
pub fn read_degradation_records(path: impl AsRef<Path>) -> Result<Vec<DegradationRecord>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}
