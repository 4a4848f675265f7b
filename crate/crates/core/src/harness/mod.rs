//! Training, evaluation, checkpoints and the latent-code applications behind
//! the command line.

pub mod apps;
pub mod checkpoint;
pub mod config;
pub mod evaluate;
pub mod grid;
pub mod train;

pub use apps::{batch, edit_mask, mix, morph, sweep, RegionSpec, Source, Sweep};
pub use checkpoint::{CheckpointMeta, Loaded, Optimizers};
pub use config::{lr_factor, DataConfig, OptimConfig, Precision, RunConfig, TrainConfig};
pub use evaluate::{evaluate, load_model, score, MetricsReport, Scores};
pub use train::{read_log, train, LogLine, TrainOutputs, Trainer};
