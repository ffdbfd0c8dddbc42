//! Model assembly, learning-rate schedules and the training loop.

mod model;
mod schedule;
mod sgd;

pub use model::{Backend, Init, LayerSpec, SequentialModel};
pub use schedule::{lr_at, LrSchedule};
pub use sgd::{evaluate, sgd_train, sgd_train_with, EpochMetrics, TrainConfig};
