use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::SuperResolver;
use crate::degradation::{degrade, gaussian8_sigmas, AnisotropicSpec, DegradationSpec, NamedImage};
use crate::error::{Error, Result};
use crate::imaging::{psnr_y, ssim_y};

pub const DEFAULT_BORDER: usize = 4;
pub const DEFAULT_NOISE_LEVELS: [f64; 3] = [0.0, 10.0, 20.0];

/// The nine anisotropic evaluation kernels: near-isotropic, isotropic wide,
/// elongated at three orientations, moderately elongated, and one oblique.
pub const ANISO_EVAL_KERNELS: [AnisotropicSpec; 9] = [
    AnisotropicSpec {
        lambda1: 0.4,
        lambda2: 0.4,
        theta: 0.0,
    },
    AnisotropicSpec {
        lambda1: 2.0,
        lambda2: 2.0,
        theta: 0.0,
    },
    AnisotropicSpec {
        lambda1: 4.0,
        lambda2: 4.0,
        theta: 0.0,
    },
    AnisotropicSpec {
        lambda1: 4.0,
        lambda2: 0.4,
        theta: 0.0,
    },
    AnisotropicSpec {
        lambda1: 4.0,
        lambda2: 0.4,
        theta: PI / 4.0,
    },
    AnisotropicSpec {
        lambda1: 4.0,
        lambda2: 0.4,
        theta: PI / 2.0,
    },
    AnisotropicSpec {
        lambda1: 4.0,
        lambda2: 2.0,
        theta: 0.0,
    },
    AnisotropicSpec {
        lambda1: 4.0,
        lambda2: 2.0,
        theta: PI / 4.0,
    },
    AnisotropicSpec {
        lambda1: 2.0,
        lambda2: 0.4,
        theta: 3.0 * PI / 4.0,
    },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    /// Label of the evaluated model, copied into the report.
    pub checkpoint: String,
    pub seed: u64,
    pub border: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            checkpoint: String::new(),
            seed: 0,
            border: DEFAULT_BORDER,
        }
    }
}

/// Mean metrics of one (kernel, noise) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub kernel: String,
    /// Noise level of the cell; `None` on the aggregate row.
    pub noise_sigma: Option<f64>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResult {
    pub kernel: String,
    pub noise_sigma: f64,
    pub image_id: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub checkpoint: String,
    pub seed: u64,
    pub border: usize,
    pub cells: Vec<EvalCell>,
    /// Mean over every (image, cell) result.
    pub aggregate: EvalCell,
    pub images: Vec<ImageResult>,
}

impl EvalReport {
    pub fn cell(&self, kernel: &str, noise_sigma: f64) -> Option<&EvalCell> {
        self.cells
            .iter()
            .find(|c| c.kernel == kernel && c.noise_sigma == Some(noise_sigma))
    }

    /// Cell rows plus a final `all` row.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for c in self.cells.iter().chain(std::iter::once(&self.aggregate)) {
            w.serialize(c)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_image_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.images {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} | checkpoint {} | seed {} | border {}",
            self.protocol,
            if self.checkpoint.is_empty() {
                "-"
            } else {
                &self.checkpoint
            },
            self.seed,
            self.border
        );
        let _ = writeln!(
            s,
            "{:<28} {:>6} {:>9} {:>8} {:>6}",
            "kernel", "noise", "PSNR(dB)", "SSIM", "n"
        );
        for c in self.cells.iter().chain(std::iter::once(&self.aggregate)) {
            let _ = writeln!(
                s,
                "{:<28} {:>6} {:>9.3} {:>8.4} {:>6}",
                c.kernel,
                c.noise_sigma.map_or("-".into(), |n| n.to_string()),
                c.mean_psnr,
                c.mean_ssim,
                c.count
            );
        }
        s
    }
}

/// Stable 64-bit FNV-1a, used to derive per-image seeds from image ids.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn image_seed(base: u64, image_id: &str, cell: usize) -> u64 {
    fnv1a(image_id.as_bytes())
        ^ base.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (cell as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f)
}

fn mean(v: impl Iterator<Item = f64>) -> (f64, usize) {
    let (sum, n) = v.fold((0.0, 0), |(s, n), x| (s + x, n + 1));
    (sum / n as f64, n)
}

fn summarise(kernel: &str, noise_sigma: Option<f64>, rows: &[&ImageResult]) -> EvalCell {
    let (mean_psnr, count) = mean(rows.iter().map(|r| r.psnr));
    let (mean_ssim, _) = mean(rows.iter().map(|r| r.ssim));
    EvalCell {
        kernel: kernel.into(),
        noise_sigma,
        mean_psnr,
        mean_ssim,
        count,
    }
}

/// Evaluates `model` on every image under every labelled degradation.
pub fn evaluate_cells(
    protocol: &str,
    model: &dyn SuperResolver,
    hr: &[NamedImage],
    cells: &[(String, DegradationSpec)],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if hr.is_empty() {
        return Err(Error::invalid("no evaluation images"));
    }
    if cells.is_empty() {
        return Err(Error::invalid("no evaluation cells"));
    }
    for img in hr {
        let scale = cells[0].1.scale;
        if img.image.height() % scale != 0 || img.image.width() % scale != 0 {
            return Err(Error::invalid(format!(
                "evaluation image {} ({}x{}) is not divisible by {scale}",
                img.id,
                img.image.height(),
                img.image.width()
            )));
        }
    }
    let jobs: Vec<(usize, &NamedImage)> = (0..cells.len())
        .flat_map(|c| hr.iter().map(move |im| (c, im)))
        .collect();
    let images: Vec<ImageResult> = jobs
        .par_iter()
        .map(|&(c, item)| {
            let (label, spec) = &cells[c];
            let mut rng = ChaCha8Rng::seed_from_u64(image_seed(opts.seed, &item.id, c));
            let lr = degrade(&item.image, spec, &mut rng)?;
            let sr = model.super_resolve(&lr, &item.image)?;
            Ok(ImageResult {
                kernel: label.clone(),
                noise_sigma: spec.noise_sigma,
                image_id: item.id.clone(),
                psnr: psnr_y(&item.image, &sr, opts.border)?,
                ssim: ssim_y(&item.image, &sr, opts.border)?,
            })
        })
        .collect::<Result<_>>()?;
    let cell_rows = cells
        .iter()
        .enumerate()
        .map(|(c, (label, spec))| {
            let rows: Vec<&ImageResult> = images[c * hr.len()..(c + 1) * hr.len()].iter().collect();
            summarise(label, Some(spec.noise_sigma), &rows)
        })
        .collect();
    let all: Vec<&ImageResult> = images.iter().collect();
    Ok(EvalReport {
        protocol: protocol.into(),
        checkpoint: opts.checkpoint.clone(),
        seed: opts.seed,
        border: opts.border,
        cells: cell_rows,
        aggregate: summarise("all", None, &all),
        images,
    })
}

pub fn gaussian8_cells() -> Result<Vec<(String, DegradationSpec)>> {
    gaussian8_sigmas()
        .into_iter()
        .map(|s| {
            Ok((
                format!("iso sigma={s:.2}"),
                DegradationSpec::isotropic(s, 4, 0.0)?,
            ))
        })
        .collect()
}

/// Eight isotropic widths spanning [1.8, 3.2], no noise, ×4.
pub fn eval_gaussian8(
    model: &dyn SuperResolver,
    hr: &[NamedImage],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    evaluate_cells("gaussian8", model, hr, &gaussian8_cells()?, opts)
}

pub fn aniso_kernel_label(i: usize, k: &AnisotropicSpec) -> String {
    format!(
        "k{i} l1={:.1} l2={:.1} t={:.2}",
        k.lambda1, k.lambda2, k.theta
    )
}

/// The 9 anisotropic kernels crossed with `noise_levels` (0–255 scale).
/// Cells are ordered noise-major.
pub fn eval_aniso_grid(
    model: &dyn SuperResolver,
    hr: &[NamedImage],
    noise_levels: &[f64],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if noise_levels.is_empty() {
        return Err(Error::invalid(
            "the anisotropic grid needs at least one noise level",
        ));
    }
    let mut cells = Vec::with_capacity(noise_levels.len() * ANISO_EVAL_KERNELS.len());
    for &noise in noise_levels {
        for (i, k) in ANISO_EVAL_KERNELS.iter().enumerate() {
            cells.push((
                aniso_kernel_label(i, k),
                DegradationSpec::anisotropic(*k, 4, noise)?,
            ));
        }
    }
    evaluate_cells("aniso-grid", model, hr, &cells, opts)
}
