//! Two-stage training and checkpoint I/O.

mod checkpoint;
mod config;
mod trainer;

pub use checkpoint::{
    Checkpoint, CheckpointKind, CheckpointMeta, Manifest, ManifestEntry, OptimizerState, RngState,
    CONFIG_FILE, MANIFEST_FILE, PARAMS_FILE,
};
pub use config::{ModelConfig, TrainConfig};
pub use trainer::{
    init_teacher_params, read_loss_log, train_student, train_student_with, train_teacher,
    train_teacher_with, write_loss_log, LossRecord, TrainOutcome,
};
