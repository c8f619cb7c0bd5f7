//! Training regimes, optimizer and learning-rate schedule.

mod adam;
mod config;
mod schedule;
mod trainer;

pub use adam::{optimizer_step, Adam, AdamState, BETA1, BETA2, EPSILON};
pub use config::{lr_schedule_step, TrainConfig, TrainMode, TrainState};
pub use schedule::{PlateauSchedule, DECAY_FACTOR, PATIENCE};
pub use trainer::{
    finetune_distorted, pretrain_plain, train_joint, train_reloc, EpochLog, Phase, TrainData,
    TrainOutcome, Trainer,
};
