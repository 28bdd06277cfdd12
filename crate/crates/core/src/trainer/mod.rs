//! Teacher-forced training: adaptive-moment optimizer with global-norm
//! clipping, gradient accumulation, bit-exact checkpoints, and evaluation.

mod checkpoint;
mod optim;
mod train;

pub use checkpoint::Checkpoint;
pub use optim::{adam_step, clip_global_norm, global_norm, AdamState, TrainConfig};
pub use train::{evaluate_teacher_forced, train, EvalReport, StepRecord, TrainOutcome, Trainer};
