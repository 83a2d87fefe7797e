//! Training loop: schedules, the AdamW optimizer, step execution,
//! checkpointing, and the metrics log.

pub mod checkpoint;
pub mod metrics;
pub mod optimizer;
pub mod pretrain;
pub mod schedule;
pub mod step;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use metrics::{read_metrics, MetricsRow, MetricsWriter};
pub use optimizer::AdamW;
pub use pretrain::{pretrain, PretrainOutcome};
pub use schedule::Schedule;
pub use step::{step_grads, train_step, StepGrads, StepStats, StepValues, TrainState};
