//! Optimizers, Polyak averaging, the training loop, gradient checking and
//! checkpoints.

mod checkpoint;
mod config;
mod gradcheck;
mod optim;
mod trainer;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{OptimizerKind, TrainConfig};
pub use gradcheck::{
    grad_check, synthetic_batch, Fault, GradBatch, GradCheckOptions, GradCheckReport, ParamAddress, REL_ERROR_FLOOR,
};
pub use optim::{
    adam_step, optimizer_step, polyak_update, rmsprop_step, sgd_step, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
    RMSPROP_DECAY, RMSPROP_EPS,
};
pub use trainer::{train, Evaluator, MetricRow, MetricsLog, Trainer};
