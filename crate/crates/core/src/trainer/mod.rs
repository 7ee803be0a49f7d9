//! Training loop with plateau learning-rate halving and early stopping, and
//! per-class evaluation.

mod evaluate;
mod schedule;
mod train;

pub use evaluate::{evaluate_per_class, predict_records, ClassErrorTable, ClassEvaluation};
pub use schedule::{best_epoch, early_stop_check, plateau_lr_step, EpochRecord, TrainLog};
pub use train::{binary_loss_accuracy, train, StepOutcome, TrainConfig, Trainer};
