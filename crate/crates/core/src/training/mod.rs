//! Optimiser, early-stopping training loop and evaluation.

mod adam;
mod data;
pub(crate) mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use data::{stratified_split, Sample, SampleSet, Standardizer};
pub use train::{
    accuracy, confusion_from, evaluate, mean_loss, predict_set, train_model, EpochRecord, Evaluation, History,
    TrainConfig, TrainState,
};
