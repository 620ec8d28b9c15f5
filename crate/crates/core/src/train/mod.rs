//! Optimizers, training and evaluation loops, run configuration,
//! checkpoints and firing-sparsity profiling.

pub mod checkpoint;
pub mod config;
pub mod optim;
mod run;
pub mod session;
pub mod sparsity;

pub use checkpoint::{load_checkpoint, model_digest, save_checkpoint};
pub use config::RunConfig;
pub use optim::{adam_step, OptimConfig, OptimKind, OptimState};
pub use run::{batch_gradient, evaluate, sample_gradient, train_epochs, EpochMetrics, EvalReport, TrainOptions};
pub use session::{evaluate_checkpoint, profile_checkpoint, run_training, RunOutputs};
pub use sparsity::{sparsity_profile, SparsityReport};
