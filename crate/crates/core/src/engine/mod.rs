//! Student model, training loop, evaluation and checkpoints.

mod checkpoint;
mod metrics;
mod model;
mod question;
mod run;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use metrics::{evaluate, predict, score_predictions, EvalEntry, MetricsRow, MetricsTable, METRICS_HEADER};
pub use model::{ForwardCache, StudentModel, HEAD_INIT_STD};
pub use question::QuestionEncoder;
pub use run::{run_continual, EngineConfig, RunOutcome};
pub use train::{epoch_order, train_task, Teachers, TrainConfig, TrainReport, WeightPolicy};
