use serde::{Deserialize, Serialize};

use crate::degradation::{DegradationMode, SamplerConfig};
use crate::diffops::KdLossKind;
use crate::error::{Error, Result};
use crate::kd_ide::IdeConfig;
use crate::sr_net::SrConfig;

/// Architecture of the estimator/SR pair. `ide` is the teacher-side
/// configuration; the student shares it except for input channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub ide: IdeConfig,
    pub sr: SrConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            ide: IdeConfig::teacher(16, 3),
            sr: SrConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.ide.validate()?;
        self.sr.validate()?;
        if self.ide.channels != self.sr.channels {
            return Err(Error::invalid(format!(
                "estimator width {} must equal SR width {}",
                self.ide.channels, self.sr.channels
            )));
        }
        if self.ide.scale != self.sr.scale {
            return Err(Error::invalid(format!(
                "estimator scale {} differs from SR scale {}",
                self.ide.scale, self.sr.scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// 1 trains the teacher, 2 distils the student.
    pub stage: u8,
    pub lr: f64,
    pub iterations: u64,
    pub batch_size: usize,
    /// LR patch side; HR patches are `scale` times larger.
    pub patch_size: usize,
    pub lambda_rec: f64,
    pub lambda_kl: f64,
    pub kd_loss: KdLossKind,
    pub seed: u64,
    pub degradation: DegradationMode,
    pub sampler: SamplerConfig,
    /// Start stage 2 with fresh optimizer moments instead of the teacher's.
    pub reset_adam: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: 1,
            lr: 1e-3,
            iterations: 300,
            batch_size: 8,
            patch_size: 16,
            lambda_rec: 1.0,
            lambda_kl: 0.15,
            kd_loss: KdLossKind::Kl,
            seed: 0,
            degradation: DegradationMode::Iso,
            sampler: SamplerConfig::default(),
            reset_adam: true,
        }
    }
}

impl TrainConfig {
    pub fn teacher() -> Self {
        Self::default()
    }

    pub fn student() -> Self {
        Self {
            stage: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self, expected_stage: u8) -> Result<()> {
        if self.stage != expected_stage {
            return Err(Error::invalid(format!(
                "configuration is for stage {}, expected stage {expected_stage}",
                self.stage
            )));
        }
        if !(self.lambda_rec >= 0.0 && self.lambda_kl >= 0.0) {
            return Err(Error::invalid("loss weights must be >= 0"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 || self.patch_size == 0 {
            return Err(Error::invalid("batch and patch sizes must be positive"));
        }
        Ok(())
    }
}
