//! Run configuration: a JSON file plus `--set section.key=value` overrides.
//! Unknown keys anywhere are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kdsr::degradation::{DegradationMode, SamplerConfig};
use kdsr::eval::{DEFAULT_BORDER, DEFAULT_NOISE_LEVELS};
use kdsr::training::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Deterministic synthetic HR set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProceduralSet {
    pub count: usize,
    pub size: usize,
    pub seed: u64,
}

/// Where HR images come from: a PNG folder or procedural textures.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImageSource {
    pub dir: Option<PathBuf>,
    pub procedural: Option<ProceduralSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub train: ImageSource,
    pub eval: ImageSource,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: ImageSource {
                dir: None,
                procedural: Some(ProceduralSet {
                    count: 20,
                    size: 64,
                    seed: 0,
                }),
            },
            eval: ImageSource {
                dir: None,
                procedural: Some(ProceduralSet {
                    count: 10,
                    size: 64,
                    seed: 1000,
                }),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// HR source; defaults to the training source.
    pub source: Option<ImageSource>,
    pub mode: DegradationMode,
    pub sampler: SamplerConfig,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            source: None,
            mode: DegradationMode::Iso,
            sampler: SamplerConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Gaussian8,
    AnisoGrid,
    Separability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Checkpoint to evaluate; defaults to `checkpoints.student`.
    pub checkpoint: Option<PathBuf>,
    pub protocols: Vec<Protocol>,
    pub noise_levels: Vec<f64>,
    pub border: usize,
    pub seed: u64,
    pub separability_sigmas: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            checkpoint: None,
            protocols: vec![
                Protocol::Gaussian8,
                Protocol::AnisoGrid,
                Protocol::Separability,
            ],
            noise_levels: DEFAULT_NOISE_LEVELS.to_vec(),
            border: DEFAULT_BORDER,
            seed: 0,
            separability_sigmas: vec![0.5, 3.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportConfig {
    /// Checkpoint to export from; defaults to `checkpoints.student`.
    pub checkpoint: Option<PathBuf>,
    /// Isotropic widths applied to every evaluation image.
    pub sigmas: Vec<f64>,
    pub include_dprime: bool,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            checkpoint: None,
            sigmas: vec![0.5, 1.5, 2.5, 3.5],
            include_dprime: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateConfig {
    pub seeds: Vec<u64>,
    pub lambda_kl: f64,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3],
            lambda_kl: 0.15,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckpointPaths {
    pub teacher: Option<PathBuf>,
    pub student: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub name: String,
    /// When set, replaces the seed of every section.
    pub seed: Option<u64>,
    pub runs_dir: PathBuf,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub teacher: TrainConfig,
    pub student: TrainConfig,
    pub checkpoints: CheckpointPaths,
    pub eval: EvalConfig,
    pub export: ExportConfig,
    pub ablate: AblateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            seed: None,
            runs_dir: "runs".into(),
            data: DataConfig::default(),
            synth: SynthConfig::default(),
            model: ModelConfig::default(),
            teacher: TrainConfig::teacher(),
            student: TrainConfig::student(),
            checkpoints: CheckpointPaths::default(),
            eval: EvalConfig::default(),
            export: ExportConfig::default(),
            ablate: AblateConfig::default(),
        }
    }
}

/// Parses an override value as JSON, falling back to a plain string.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()))
}

/// Applies one `a.b.c=value` override, creating intermediate objects.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .with_context(|| format!("override `{assignment}` is not of the form key=value"))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("override `{assignment}` has an empty key");
    }
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let obj = node
            .as_object_mut()
            .with_context(|| format!("override `{assignment}`: `{key}` is not inside an object"))?;
        node = obj
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node
        .as_object_mut()
        .with_context(|| format!("override `{assignment}` does not address an object field"))?;
    obj.insert(keys[keys.len() - 1].to_string(), parse_value(raw));
    Ok(())
}

/// Merges `overlay` into `base`, recursing into objects.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Defaults, then the optional file, then overrides, then `--seed`.
    pub fn resolve(file: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut user = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            apply_override(&mut user, o)?;
        }
        let mut merged = serde_json::to_value(RunConfig::default())?;
        merge(&mut merged, user);
        let mut cfg: RunConfig = serde_json::from_value(merged).context("invalid configuration")?;
        if seed.is_some() {
            cfg.seed = seed;
        }
        cfg.apply_global_seed();
        cfg.model.validate()?;
        Ok(cfg)
    }

    fn apply_global_seed(&mut self) {
        if let Some(s) = self.seed {
            self.synth.seed = s;
            self.teacher.seed = s;
            self.student.seed = s;
            self.eval.seed = s;
        }
    }
}
