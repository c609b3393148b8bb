//! Losses, metrics, Adam, and the warmup-then-full training loop.

mod metrics;
mod optim;
mod trainer;

pub use metrics::{accuracy, nll_loss, roc_auc};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use trainer::{evaluate, train_step, Batch, log_to_csv, train, EpochLog, Metric, Metrics, TrainConfig, TrainOutcome};
