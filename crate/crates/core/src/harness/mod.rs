//! Datasets, training, evaluation, and comparison tables.

pub mod dataset;
pub mod eval;
pub mod experiment;
pub mod gradcheck;
pub mod report;
pub mod train;

pub use dataset::{gen_dataset, Dataset};
pub use eval::{evaluate, measure_latency, EvalReport, LatencyConfig, LatencyStats, Method};
pub use experiment::{build_report, ExperimentConfig, ScaConfig};
pub use report::{compare_table, Cell, CompareTable, Outcome, Reference, RowKey};
pub use train::{train, train_with, EpochRecord, TrainConfig, TrainHistory};
