//! Evaluation protocols: the Gaussian8 isotropic sweep, the anisotropic
//! kernel × noise grid, IDR separability and the distillation ablation.

mod ablation;
mod model;
mod protocols;
mod separability;

pub use ablation::{
    run_ablation, standard_arms, AblationArm, AblationPlan, AblationReport, AblationRow, ArmSummary,
};
pub use model::{HrPassthrough, SrModel, SuperResolver};
pub use protocols::{
    aniso_kernel_label, eval_aniso_grid, eval_gaussian8, evaluate_cells, gaussian8_cells, EvalCell,
    EvalOptions, EvalReport, ImageResult, ANISO_EVAL_KERNELS, DEFAULT_BORDER, DEFAULT_NOISE_LEVELS,
};
pub use separability::{idr_separability, SeparabilityReport, MIN_SEPARABILITY_IMAGES};
