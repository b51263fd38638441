//! Configuration-driven MNIST training runs.

pub mod check;
pub mod config;
pub mod logs;
pub mod model;
pub mod train;

pub use check::{oracle_check, CheckReport, CheckRow};
pub use config::{Algorithm, Experiment, RunConfig, TrainOnly};
pub use logs::{load_checkpoint, read_manifest, read_metrics, save_checkpoint, Manifest, MetricsRecord};
pub use model::{Model, SampleOutcome};
pub use train::{
    cumulative_loss, evaluate, load_datasets, mean_std, run_to_dir, run_training, sweep, train_model,
    RunOutcome, SweepSummary,
};
