use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::SrModel;
use super::protocols::{eval_gaussian8, EvalOptions};
use crate::degradation::NamedImage;
use crate::diffops::KdLossKind;
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::training::{train_student, Checkpoint, TrainConfig, TrainOutcome};

/// One stage-2 variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationArm {
    pub name: String,
    pub kd_loss: KdLossKind,
    pub lambda_kl: f64,
}

/// KD with each loss at `lambda_kl`, plus the no-KD arm.
pub fn standard_arms(lambda_kl: f64) -> Vec<AblationArm> {
    KdLossKind::ALL
        .iter()
        .map(|&k| AblationArm {
            name: format!("kd-{}", k.name()),
            kd_loss: k,
            lambda_kl,
        })
        .chain(std::iter::once(AblationArm {
            name: "no-kd".into(),
            kd_loss: KdLossKind::Kl,
            lambda_kl: 0.0,
        }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub arm: String,
    pub seed: u64,
    pub psnr: f64,
    pub ssim: f64,
    pub final_l_kd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub runs: usize,
    pub mean_psnr: f64,
    /// Standard error of the mean PSNR (sample standard deviation / sqrt(n)).
    pub stderr_psnr: f64,
    pub mean_ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub summaries: Vec<ArmSummary>,
}

impl AblationReport {
    pub fn summary(&self, arm: &str) -> Option<&ArmSummary> {
        self.summaries.iter().find(|s| s.arm == arm)
    }

    pub fn write_csv(
        &self,
        rows_path: impl AsRef<Path>,
        summary_path: impl AsRef<Path>,
    ) -> Result<()> {
        let rows_path = rows_path.as_ref();
        let mut w = csv::Writer::from_path(rows_path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(rows_path, e))?;
        let summary_path = summary_path.as_ref();
        let mut w = csv::Writer::from_path(summary_path)?;
        for s in &self.summaries {
            w.serialize(s)?;
        }
        w.flush().map_err(|e| Error::io(summary_path, e))
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:>6} {:>10} {:>8}",
            "arm", "seed", "PSNR(dB)", "SSIM"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<10} {:>6} {:>10.4} {:>8.4}",
                r.arm, r.seed, r.psnr, r.ssim
            );
        }
        let _ = writeln!(
            s,
            "{:<10} {:>6} {:>10} {:>8} {:>8}",
            "arm", "runs", "mean", "stderr", "SSIM"
        );
        for a in &self.summaries {
            let _ = writeln!(
                s,
                "{:<10} {:>6} {:>10.4} {:>8.4} {:>8.4}",
                a.arm, a.runs, a.mean_psnr, a.stderr_psnr, a.mean_ssim
            );
        }
        s
    }
}

fn summarise(arm: &str, rows: &[&AblationRow]) -> ArmSummary {
    let n = rows.len() as f64;
    let mean_psnr = rows.iter().map(|r| r.psnr).sum::<f64>() / n;
    let var = if rows.len() > 1 {
        rows.iter()
            .map(|r| (r.psnr - mean_psnr).powi(2))
            .sum::<f64>()
            / (n - 1.0)
    } else {
        0.0
    };
    ArmSummary {
        arm: arm.into(),
        runs: rows.len(),
        mean_psnr,
        stderr_psnr: (var / n).sqrt(),
        mean_ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / n,
    }
}

/// Inputs of [`run_ablation`]. `base` supplies every stage-2 setting except
/// the seed and the arm's loss choice.
#[derive(Debug, Clone, Copy)]
pub struct AblationPlan<'a> {
    pub train: &'a [Image],
    pub eval_hr: &'a [NamedImage],
    pub teacher: &'a Checkpoint,
    pub base: &'a TrainConfig,
    pub arms: &'a [AblationArm],
    pub seeds: &'a [u64],
    pub eval: &'a EvalOptions,
}

/// Trains one student per (arm, seed) from the same teacher and scores each
/// on the Gaussian8 sweep of `eval_hr`. `on_run` sees every finished training.
pub fn run_ablation(
    plan: &AblationPlan,
    on_run: &mut dyn FnMut(&AblationArm, u64, &TrainOutcome) -> Result<()>,
) -> Result<AblationReport> {
    let AblationPlan {
        train,
        eval_hr,
        teacher,
        base,
        arms,
        seeds,
        eval,
    } = *plan;
    if arms.is_empty() || seeds.is_empty() {
        return Err(Error::invalid(
            "ablation needs at least one arm and one seed",
        ));
    }
    let mut rows = Vec::with_capacity(arms.len() * seeds.len());
    for arm in arms {
        for &seed in seeds {
            let cfg = TrainConfig {
                stage: 2,
                seed,
                kd_loss: arm.kd_loss,
                lambda_kl: arm.lambda_kl,
                ..base.clone()
            };
            let outcome = train_student(train, teacher, &cfg)?;
            on_run(arm, seed, &outcome)?;
            let model = SrModel::from_checkpoint(&outcome.checkpoint)?;
            let report = eval_gaussian8(&model, eval_hr, eval)?;
            rows.push(AblationRow {
                arm: arm.name.clone(),
                seed,
                psnr: report.aggregate.mean_psnr,
                ssim: report.aggregate.mean_ssim,
                final_l_kd: outcome.log.last().map_or(0.0, |r| r.l_kd),
            });
        }
    }
    let summaries = arms
        .iter()
        .map(|arm| {
            let arm_rows: Vec<&AblationRow> = rows.iter().filter(|r| r.arm == arm.name).collect();
            summarise(&arm.name, &arm_rows)
        })
        .collect();
    Ok(AblationReport { rows, summaries })
}
