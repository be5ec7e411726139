//! Monthly-to-hourly disaggregation: a cascade of small regressors splitting
//! a month into weeks, weeks into days and days into hours.

mod correlation;
mod dataset;
mod model;
mod regressor;

pub use correlation::{abs_correlation, timescale_correlation, CorrelationEntry};
pub use dataset::{build_training_sets, MonthEnergies, TrainingSets};
pub use model::{
    disaggregate_pair, train_all, train_from_sets, train_mtsl, Cascade, ModelSet, MtslModel, RegressorReport,
    MIN_MEMBER_MONTHS, MODEL_SCHEMA_VERSION,
};
pub use regressor::{Pairs, Regressor, TrainConfig, TrainingLog, MIN_TRAINING_PAIRS};
