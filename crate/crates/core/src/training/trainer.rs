//! Stage 1 (teacher estimator + SR under L1) and stage 2 (student estimator +
//! SR under `lambda_rec * L1 + lambda_kl * KD` against a frozen teacher).
//!
//! Samples in a batch run forward/backward independently, in parallel; their
//! gradients are summed in batch order so results do not depend on thread count.

use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, CheckpointKind, CheckpointMeta, OptimizerState, RngState};
use super::config::{ModelConfig, TrainConfig};
use crate::degradation::degrade;
use crate::diffops::{l1_loss, lit, Adam, AdamConfig, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::kd_ide::{init_student_from_teacher, make_teacher_input, KdIde};
use crate::sr_net::SrNet;

/// RNG stream for parameter initialisation; data sampling uses [`DATA_STREAM`].
const INIT_STREAM: u64 = 0;
const DATA_STREAM: u64 = 1;

/// One row of the loss log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: u64,
    pub l_rec: f64,
    pub l_kd: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LossRecord>,
}

pub fn write_loss_log(path: impl AsRef<Path>, log: &[LossRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for r in log {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_loss_log(path: impl AsRef<Path>) -> Result<Vec<LossRecord>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

struct Sample {
    lr: Tensor<f32>,
    hr: Tensor<f32>,
}

fn check_dataset(data: &[Image], cfg: &TrainConfig, scale: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if data.len() < cfg.batch_size {
        return Err(Error::invalid(format!(
            "training set has {} images, fewer than the batch size {}",
            data.len(),
            cfg.batch_size
        )));
    }
    if cfg.sampler.scale != scale {
        return Err(Error::invalid(format!(
            "degradation scale {} differs from model scale {scale}",
            cfg.sampler.scale
        )));
    }
    let side = cfg.patch_size * scale;
    if let Some(i) = data
        .iter()
        .position(|im| im.height() < side || im.width() < side || im.channels() != 3)
    {
        return Err(Error::invalid(format!(
            "training image {i} cannot supply a {side}x{side} RGB patch"
        )));
    }
    Ok(())
}

/// Distinct images, scale-aligned random crops, fresh degradation per patch.
fn sample_batch(
    data: &[Image],
    cfg: &TrainConfig,
    scale: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Sample>> {
    let side = cfg.patch_size * scale;
    index::sample(rng, data.len(), cfg.batch_size)
        .into_iter()
        .map(|i| {
            let img = &data[i];
            let top = scale * rng.random_range(0..=(img.height() - side) / scale);
            let left = scale * rng.random_range(0..=(img.width() - side) / scale);
            let hr = img.crop(top, left, side, side)?;
            let spec = cfg.sampler.sample(cfg.degradation, rng)?;
            let lr = degrade(&hr, &spec, rng)?;
            Ok(Sample {
                lr: lr.to_tensor(),
                hr: hr.to_tensor(),
            })
        })
        .collect()
}

struct SampleGrads {
    l_rec: f32,
    l_kd: f32,
    ide: ParamSet<f32>,
    sr: ParamSet<f32>,
}

/// Trained parameters, optimizers, loss log and data stream after a run.
type RunState = (
    ParamSet<f32>,
    ParamSet<f32>,
    (Adam<f32>, Adam<f32>),
    Vec<LossRecord>,
    ChaCha8Rng,
);

/// Networks and parameters for one stage; `teacher` is set in stage 2.
struct Stage<'a> {
    ide: KdIde,
    sr: SrNet,
    teacher: Option<(KdIde, &'a ParamSet<f32>)>,
    cfg: &'a TrainConfig,
}

impl Stage<'_> {
    fn sample_grads(
        &self,
        ide_p: &ParamSet<f32>,
        sr_p: &ParamSet<f32>,
        s: &Sample,
        inv_n: f32,
    ) -> Result<SampleGrads> {
        let scale = self.sr.config.scale;
        let stage1 = self.teacher.is_none();
        let ide_in = if stage1 {
            make_teacher_input(&s.lr, &s.hr, scale)?
        } else {
            s.lr.clone()
        };
        let (idr, ide_trace) = self.ide.forward(ide_p, &ide_in)?;
        let (out, sr_trace) = self.sr.forward(sr_p, &s.lr, &idr.d)?;
        let mut rec = l1_loss(&out, &s.hr)?;
        rec.grad.scale(lit::<f32>(self.cfg.lambda_rec) * inv_n);

        let mut sr_g = sr_p.zeros_like();
        let g_d = self.sr.backward(sr_p, &sr_trace, &rec.grad, &mut sr_g)?;

        let mut l_kd = 0.0;
        let mut g_dprime = None;
        if let Some((teacher, teacher_p)) = &self.teacher {
            if self.cfg.lambda_kl > 0.0 {
                let (target, _) =
                    teacher.forward(teacher_p, &make_teacher_input(&s.lr, &s.hr, scale)?)?;
                let mut kd = self.cfg.kd_loss.apply(&target.d_prime, &idr.d_prime)?;
                kd.grad.scale(lit::<f32>(self.cfg.lambda_kl) * inv_n);
                l_kd = kd.value;
                g_dprime = Some(kd.grad);
            }
        }
        let mut ide_g = ide_p.zeros_like();
        self.ide.backward(
            ide_p,
            &ide_trace,
            Some(&g_d),
            g_dprime.as_ref(),
            &mut ide_g,
            false,
        )?;
        Ok(SampleGrads {
            l_rec: rec.value,
            l_kd,
            ide: ide_g,
            sr: sr_g,
        })
    }

    fn run(
        &self,
        data: &[Image],
        mut ide_p: ParamSet<f32>,
        mut sr_p: ParamSet<f32>,
        mut adams: (Adam<f32>, Adam<f32>),
        on_step: &mut dyn FnMut(&LossRecord),
    ) -> Result<RunState> {
        let cfg = self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(DATA_STREAM);
        let n = cfg.batch_size;
        let inv_n = 1.0 / n as f32;
        let mut log = Vec::with_capacity(cfg.iterations as usize);
        for iteration in 0..cfg.iterations {
            let batch = sample_batch(data, cfg, self.sr.config.scale, &mut rng)?;
            let per_sample: Vec<SampleGrads> = batch
                .par_iter()
                .map(|s| self.sample_grads(&ide_p, &sr_p, s, inv_n))
                .collect::<Result<_>>()?;
            let mut ide_g = ide_p.zeros_like();
            let mut sr_g = sr_p.zeros_like();
            let (mut l_rec, mut l_kd) = (0.0f64, 0.0f64);
            for g in &per_sample {
                ide_g.accumulate(&g.ide)?;
                sr_g.accumulate(&g.sr)?;
                l_rec += f64::from(g.l_rec);
                l_kd += f64::from(g.l_kd);
            }
            l_rec /= n as f64;
            l_kd /= n as f64;
            let total = cfg.lambda_rec * l_rec + cfg.lambda_kl * l_kd;
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss { iteration });
            }
            adams.0.step(&mut ide_p, &ide_g)?;
            adams.1.step(&mut sr_p, &sr_g)?;
            let record = LossRecord {
                iteration,
                l_rec,
                l_kd,
                total,
            };
            on_step(&record);
            log.push(record);
        }
        Ok((ide_p, sr_p, adams, log, rng))
    }
}

fn finish(
    kind: CheckpointKind,
    models: ModelConfig,
    cfg: &TrainConfig,
    (ide, sr, adams, log, rng): RunState,
) -> Result<TrainOutcome> {
    let optimizer = OptimizerState {
        ide: adams.0.state(&ide)?,
        sr: adams.1.state(&sr)?,
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            meta: CheckpointMeta {
                kind,
                models,
                train: cfg.clone(),
                iteration: cfg.iterations,
                rng: RngState::capture(&rng),
                adam_steps: Some((optimizer.ide.step, optimizer.sr.step)),
            },
            ide,
            sr,
            optimizer: Some(optimizer),
        },
        log,
    })
}

/// Freshly initialised teacher estimator and SR parameters for `seed`.
pub fn init_teacher_params(
    models: &ModelConfig,
    seed: u64,
) -> Result<(ParamSet<f32>, ParamSet<f32>)> {
    models.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    let ide = KdIde::new(models.ide)?.init_params(&mut rng);
    let sr = SrNet::new(models.sr)?.init_params(&mut rng);
    Ok((ide, sr))
}

pub fn train_teacher(
    data: &[Image],
    models: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_teacher_with(data, models, cfg, &mut |_| {})
}

/// [`train_teacher`] with a callback after every optimizer step.
pub fn train_teacher_with(
    data: &[Image],
    models: &ModelConfig,
    cfg: &TrainConfig,
    on_step: &mut dyn FnMut(&LossRecord),
) -> Result<TrainOutcome> {
    cfg.validate(1)?;
    models.validate()?;
    if !models.ide.is_teacher() {
        return Err(Error::invalid(
            "stage 1 needs the 51-channel teacher estimator",
        ));
    }
    check_dataset(data, cfg, models.sr.scale)?;
    let (ide_p, sr_p) = init_teacher_params(models, cfg.seed)?;
    let stage = Stage {
        ide: KdIde::new(models.ide)?,
        sr: SrNet::new(models.sr)?,
        teacher: None,
        cfg,
    };
    let adam = AdamConfig::with_lr(cfg.lr);
    let result = stage.run(
        data,
        ide_p,
        sr_p,
        (Adam::new(adam), Adam::new(adam)),
        on_step,
    )?;
    finish(CheckpointKind::Teacher, *models, cfg, result)
}

pub fn train_student(
    data: &[Image],
    teacher: &Checkpoint,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_student_with(data, teacher, cfg, &mut |_| {})
}

/// Student estimator starts from the teacher's (first conv sliced to the LR
/// channels), SR network from the teacher's SR network. The teacher itself is
/// never updated.
pub fn train_student_with(
    data: &[Image],
    teacher: &Checkpoint,
    cfg: &TrainConfig,
    on_step: &mut dyn FnMut(&LossRecord),
) -> Result<TrainOutcome> {
    cfg.validate(2)?;
    if teacher.meta.kind != CheckpointKind::Teacher {
        return Err(Error::invalid("stage 2 needs a stage-1 teacher checkpoint"));
    }
    let models = teacher.meta.models;
    teacher.check_models(&models)?;
    check_dataset(data, cfg, models.sr.scale)?;
    let student_cfg = models.ide.as_student();
    let ide_p = init_student_from_teacher(&teacher.ide, &models.ide, &student_cfg)?;
    let sr_p = teacher.sr.clone();
    let adam = AdamConfig::with_lr(cfg.lr);
    let adams = if cfg.reset_adam {
        (Adam::new(adam), Adam::new(adam))
    } else {
        let opt = teacher.optimizer.as_ref().ok_or_else(|| {
            Error::Checkpoint("teacher checkpoint stores no optimizer state".into())
        })?;
        let mut ide_state = opt.ide.clone();
        ide_state.first = init_student_from_teacher(&opt.ide.first, &models.ide, &student_cfg)?;
        ide_state.second = init_student_from_teacher(&opt.ide.second, &models.ide, &student_cfg)?;
        (
            Adam::from_state(adam, &ide_state)?,
            Adam::from_state(adam, &opt.sr)?,
        )
    };
    let stage = Stage {
        ide: KdIde::new(student_cfg)?,
        sr: SrNet::new(models.sr)?,
        teacher: Some((KdIde::new(models.ide)?, &teacher.ide)),
        cfg,
    };
    let result = stage.run(data, ide_p, sr_p, adams, on_step)?;
    finish(CheckpointKind::Student, models, cfg, result)
}
