//! Subject-level splitting, the training loop, and evaluation metrics.

mod data;
mod metrics;
mod split;
mod trainer;

pub use data::{class_index, filter_by_subjects, load_dataset, prepare_examples, TrainExample};
pub use metrics::{evaluate, metrics_from_confusion, Confusion, EvalReport};
pub use split::{make_split, Fold, SplitPlan, ValScheme};
pub use trainer::{train, EpochRecord, TrainConfig, TrainLog};
