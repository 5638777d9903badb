//! Optimizer, schedule, freeze policy and the training loop.

mod freeze;
mod optim;
mod schedule;
mod trainer;

pub use freeze::{FreezePolicy, BUFFERS};
pub use optim::{AdamW, AdamWConfig};
pub use schedule::{table2, ScheduleSpec};
pub use trainer::{
    curve_csv, dataset_loss, prepare, train, train_step, write_outputs, RunConfig, StepRecord, TrainOutput,
    DESK_EPOCHS, DESK_MAX_LR, DESK_WARMUP_EPOCHS,
};
