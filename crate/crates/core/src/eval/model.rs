use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffops::ParamSet;
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::kd_ide::{make_teacher_input, IdrPair, KdIde};
use crate::sr_net::SrNet;
use crate::training::{Checkpoint, CheckpointKind, ModelConfig};

/// Anything that maps an LR image to an SR image. The HR image is available
/// for oracles and the teacher; blind models must ignore it.
pub trait SuperResolver: Sync {
    fn super_resolve(&self, lr: &Image, hr: &Image) -> Result<Image>;
}

/// Returns the HR image unchanged; the metric ceiling.
#[derive(Debug, Clone, Copy, Default)]
pub struct HrPassthrough;

impl SuperResolver for HrPassthrough {
    fn super_resolve(&self, _lr: &Image, hr: &Image) -> Result<Image> {
        Ok(hr.clone())
    }
}

/// An estimator and SR network with frozen parameters.
#[derive(Debug, Clone)]
pub struct SrModel {
    pub kind: CheckpointKind,
    ide: KdIde,
    ide_params: ParamSet<f32>,
    sr: SrNet,
    sr_params: ParamSet<f32>,
}

impl SrModel {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.check_models(&ckpt.meta.models)?;
        Ok(Self {
            kind: ckpt.meta.kind,
            ide: KdIde::new(ckpt.ide_config())?,
            ide_params: ckpt.ide.clone(),
            sr: SrNet::new(ckpt.meta.models.sr)?,
            sr_params: ckpt.sr.clone(),
        })
    }

    /// A randomly initialised student, the reference point for separability.
    pub fn untrained_student(models: &ModelConfig, seed: u64) -> Result<Self> {
        models.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ide = KdIde::new(models.ide.as_student())?;
        let sr = SrNet::new(models.sr)?;
        Ok(Self {
            kind: CheckpointKind::Student,
            ide_params: ide.init_params(&mut rng),
            sr_params: sr.init_params(&mut rng),
            ide,
            sr,
        })
    }

    /// Degradation representation of `lr`. The teacher also needs `hr`.
    pub fn estimate(&self, lr: &Image, hr: Option<&Image>) -> Result<IdrPair<f32>> {
        let lr_t = lr.to_tensor();
        let input = match (self.kind, hr) {
            (CheckpointKind::Student, _) => lr_t,
            (CheckpointKind::Teacher, Some(hr)) => {
                make_teacher_input(&lr_t, &hr.to_tensor(), self.sr.config.scale)?
            }
            (CheckpointKind::Teacher, None) => {
                return Err(Error::invalid("the teacher estimator needs the HR image"));
            }
        };
        Ok(self.ide.forward(&self.ide_params, &input)?.0)
    }
}

impl SuperResolver for SrModel {
    fn super_resolve(&self, lr: &Image, hr: &Image) -> Result<Image> {
        let idr = self.estimate(lr, Some(hr))?;
        let (out, _) = self.sr.forward(&self.sr_params, &lr.to_tensor(), &idr.d)?;
        Image::from_tensor(&out, 0)
    }
}
