//! Optimization loop, schedules and checkpoints.

mod checkpoint;
mod optim;
mod trainer;

pub use checkpoint::{
    checkpoint_model_config, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
pub use optim::{cosine_lr, grad_norm, scale_grads, Adam, AdamHyper};
pub use trainer::{
    fit, validate, write_curves, BatchSchedule, CurveRow, FitOptions, LossKind, OptimizerKind,
    SchedulerKind, StepDiagnostics, TrainConfig, TrainState, Trainer, BEST_CHECKPOINT,
    CURVES_FILE, LAST_CHECKPOINT, TRAIN_LOG,
};
