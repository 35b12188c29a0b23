//! Joint optimization of the mask distribution and the decoder.

mod adam;
mod config;
mod trainer;

pub use adam::{AdamConfig, AdamState, ADAM_EPS};
pub use config::TrainConfig;
pub use trainer::{
    read_metrics_csv, train_loop, write_metrics_csv, EpochMetrics, Model, TrainOutcome, Trainer, CHECKPOINT_FILE,
    METRICS_FILE, METRICS_HEADER,
};
