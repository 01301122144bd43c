//! Trajectory data, prediction error statistics, covariance agreement and
//! runtime measurement.

mod bench;
mod metrics;
mod report;
mod synth;
mod trajectory;

use std::path::PathBuf;

use thiserror::Error;

pub use bench::{
    benchmark, run_lqr, run_rl, samples_checksum, tree_checksum, BenchConfig, RuntimeTable, Timing,
    BENCH_HORIZONS,
};
pub use metrics::{
    covariance_metrics, prediction_errors, prune_to_measured, CovarianceReport, CovarianceRow,
    ErrorTable, EvalOptions, HorizonErrors, LqrPathPredictor, PositionPredictor, PredictedPath,
    Query, RlPathPredictor,
};
pub use report::{error_scatter_csv, MetricsReport, MetricsRow};
pub use synth::{synth_dataset, ReferenceClock, SynthConfig, SENSOR_RATE};
pub use trajectory::{
    estimate_states, estimate_states_with, load_trajectories, parse_trajectories, write_trajectories,
    Label, Sample, StateTrack, Trajectory, DEFAULT_SMOOTHING_WINDOW, STATIONARY_SPEED,
};

use crate::predictor::PredictError;
use crate::rl_baseline::RlError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: usize, message: String },
    #[error("trajectory {id}: time does not increase at line {line}")]
    NonMonotoneTime { id: String, line: usize },
    #[error("trajectory {id} has only {samples} samples (need 3)")]
    TooShort { id: String, samples: usize },
    #[error("no trajectory is long enough for horizon {tau}")]
    NoValidWindows { tau: usize },
    #[error("horizon {tau} has {count} error samples (need 2)")]
    InsufficientSamples { tau: usize, count: usize },
    #[error("the value model has no goals")]
    NoGoals,
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
