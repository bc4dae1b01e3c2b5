//! Config-driven training runs, their reports, and run comparison tables.

mod compare;
mod config;
mod report;
mod runner;

pub use compare::{compare_runs, Cell, ComparisonTable};
pub use config::{
    Architecture, DatasetSource, ExperimentConfig, Regime, SoftTargetSettings, DATA_DIR_ENV,
    DEFAULT_BATCH_SIZE, TEST_IMAGES, TEST_LABELS, TRAIN_IMAGES, TRAIN_LABELS,
};
pub use report::{summarize, EpochPhase, EpochRecord, Summary, TrainReport};
pub use runner::{
    checkpoint_path, evaluate, predict_all, run_experiment, write_report, Experiment, RunOutcome,
    TimeStep, STREAM_DROPOUT, STREAM_INIT, STREAM_SHUFFLE,
};
