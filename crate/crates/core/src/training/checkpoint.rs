//! Checkpoint directories: `manifest.json` indexes one little-endian `f32`
//! blob `params.bin`; `config.json` holds configuration, RNG position and the
//! iteration counter. Saving writes a sibling temp directory and renames it.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, TrainConfig};
use crate::diffops::{AdamState, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::kd_ide::{IdeConfig, KdIde};
use crate::sr_net::SrNet;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const CONFIG_FILE: &str = "config.json";

const IDE_PREFIX: &str = "ide.";
const SR_PREFIX: &str = "sr.";
const OPT_PREFIXES: [&str; 4] = ["adam.ide.m.", "adam.ide.v.", "adam.sr.m.", "adam.sr.v."];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    Teacher,
    Student,
}

/// Position of a ChaCha8 stream, enough to rebuild it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub kind: CheckpointKind,
    pub models: ModelConfig,
    pub train: TrainConfig,
    pub iteration: u64,
    pub rng: RngState,
    /// Optimizer step counts `(ide, sr)` when moments are stored.
    pub adam_steps: Option<(u64, u64)>,
}

/// Optimizer moments for both networks.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub ide: AdamState<f32>,
    pub sr: AdamState<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub ide: ParamSet<f32>,
    pub sr: ParamSet<f32>,
    pub optimizer: Option<OptimizerState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
    pub nbytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub total_bytes: u64,
    pub tensors: Vec<ManifestEntry>,
}

impl Checkpoint {
    /// Estimator configuration matching `self.ide`.
    pub fn ide_config(&self) -> IdeConfig {
        match self.meta.kind {
            CheckpointKind::Teacher => self.meta.models.ide,
            CheckpointKind::Student => self.meta.models.ide.as_student(),
        }
    }

    /// Checks every stored tensor against freshly built networks for `models`;
    /// the error names the first offending tensor.
    pub fn check_models(&self, models: &ModelConfig) -> Result<()> {
        models.validate()?;
        let ide_cfg = match self.meta.kind {
            CheckpointKind::Teacher => models.ide,
            CheckpointKind::Student => models.ide.as_student(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        KdIde::new(ide_cfg)?
            .init_params::<f32>(&mut rng)
            .check_compatible(&self.ide)
            .map_err(|e| prefix_error(e, IDE_PREFIX))?;
        SrNet::new(models.sr)?
            .init_params::<f32>(&mut rng)
            .check_compatible(&self.sr)
            .map_err(|e| prefix_error(e, SR_PREFIX))
    }

    fn flatten(&self) -> Result<ParamSet<f32>> {
        let mut all = ParamSet::new();
        all.extend_prefixed(IDE_PREFIX, &self.ide)?;
        all.extend_prefixed(SR_PREFIX, &self.sr)?;
        if let Some(opt) = &self.optimizer {
            let groups = [
                &opt.ide.first,
                &opt.ide.second,
                &opt.sr.first,
                &opt.sr.second,
            ];
            for (prefix, set) in OPT_PREFIXES.iter().zip(groups) {
                all.extend_prefixed(prefix, set)?;
            }
        }
        Ok(all)
    }

    /// Serialized blob and its manifest.
    pub fn encode(&self) -> Result<(Manifest, Vec<u8>)> {
        let all = self.flatten()?;
        let mut blob = Vec::with_capacity(all.numel() * 4);
        let mut tensors = Vec::with_capacity(all.len());
        for (name, t) in all.iter() {
            let offset = blob.len() as u64;
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            tensors.push(ManifestEntry {
                name: name.to_owned(),
                shape: t.shape().to_vec(),
                dtype: "f32".into(),
                offset,
                nbytes: blob.len() as u64 - offset,
            });
        }
        Ok((
            Manifest {
                total_bytes: blob.len() as u64,
                tensors,
            },
            blob,
        ))
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let (manifest, blob) = self.encode()?;
        let name = dir
            .file_name()
            .ok_or_else(|| Error::Checkpoint(format!("{} has no directory name", dir.display())))?;
        let parent = dir
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let tmp = parent.join(format!(
            ".{}.tmp-{}",
            name.to_string_lossy(),
            std::process::id()
        ));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        }
        fs::create_dir(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let write = |file: &str, bytes: &[u8]| {
            let p = tmp.join(file);
            fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
        };
        write(PARAMS_FILE, &blob)?;
        write(
            MANIFEST_FILE,
            serde_json::to_string_pretty(&manifest)?.as_bytes(),
        )?;
        write(
            CONFIG_FILE,
            serde_json::to_string_pretty(&self.meta)?.as_bytes(),
        )?;
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |file: &str| {
            let p = dir.join(file);
            fs::read(&p).map_err(|e| Error::io(&p, e))
        };
        let manifest: Manifest = serde_json::from_slice(&read(MANIFEST_FILE)?)?;
        let meta: CheckpointMeta = serde_json::from_slice(&read(CONFIG_FILE)?)?;
        let blob = read(PARAMS_FILE)?;
        let all = decode(&manifest, &blob)?;

        let group = |prefix: &str| all.strip_prefix(prefix);
        let optimizer = meta.adam_steps.map(|(ide_step, sr_step)| OptimizerState {
            ide: AdamState {
                step: ide_step,
                first: group(OPT_PREFIXES[0]),
                second: group(OPT_PREFIXES[1]),
            },
            sr: AdamState {
                step: sr_step,
                first: group(OPT_PREFIXES[2]),
                second: group(OPT_PREFIXES[3]),
            },
        });
        let ckpt = Self {
            ide: group(IDE_PREFIX),
            sr: group(SR_PREFIX),
            meta,
            optimizer,
        };
        let known = ckpt.flatten()?;
        if known.len() != all.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors in the manifest, {} belong to known groups",
                all.len(),
                known.len()
            )));
        }
        ckpt.check_models(&ckpt.meta.models)?;
        Ok(ckpt)
    }
}

fn prefix_error(e: Error, prefix: &str) -> Error {
    match e {
        Error::Parameter { name, reason } => Error::Parameter {
            name: format!("{prefix}{name}"),
            reason,
        },
        other => other,
    }
}

fn decode(manifest: &Manifest, blob: &[u8]) -> Result<ParamSet<f32>> {
    if manifest.total_bytes != blob.len() as u64 {
        return Err(Error::Checkpoint(format!(
            "manifest declares {} bytes, blob has {}",
            manifest.total_bytes,
            blob.len()
        )));
    }
    let mut expected_offset = 0u64;
    let mut out = ParamSet::new();
    for e in &manifest.tensors {
        if e.dtype != "f32" {
            return Err(Error::Checkpoint(format!(
                "`{}` has unsupported dtype {}",
                e.name, e.dtype
            )));
        }
        let numel: usize = e.shape.iter().product();
        if e.offset != expected_offset || e.nbytes != numel as u64 * 4 {
            return Err(Error::Checkpoint(format!(
                "`{}` at offset {} with {} bytes is inconsistent with its shape {:?}",
                e.name, e.offset, e.nbytes, e.shape
            )));
        }
        let end = e.offset + e.nbytes;
        if end > blob.len() as u64 {
            return Err(Error::Checkpoint(format!(
                "`{}` runs past the end of the blob",
                e.name
            )));
        }
        let data = blob[e.offset as usize..end as usize]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        out.insert(e.name.clone(), Tensor::from_vec(&e.shape, data)?)
            .map_err(|_| Error::Checkpoint(format!("duplicate tensor `{}`", e.name)))?;
        expected_offset = end;
    }
    if expected_offset != manifest.total_bytes {
        return Err(Error::Checkpoint(
            "manifest does not cover the whole blob".into(),
        ));
    }
    Ok(out)
}
