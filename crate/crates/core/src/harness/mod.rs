//! Configuration, seeding, the training/evaluation loops, calibration,
//! verification protocols, logging, and plot rendering.

pub mod calibrate;
pub mod checks;
pub mod config;
pub mod plot;
pub mod runlog;
pub mod train;

pub use calibrate::{calibrate_dob, CalibrationReport};
pub use checks::{run_gradcheck, run_qp_check, GradCheckOutcome, QpCheckOutcome};
pub use config::{ConfigError, FilterMode, ModeFlags, RlConfig, RunConfig};
pub use plot::{render_metric, render_plots, Metric};
pub use runlog::{IterRecord, RunLog, RunLogError, RunMeta};
pub use train::{evaluate, load_checkpoint, train, AgentCheckpoint, EvalSummary, TrainOutput};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    RunLog(#[from] RunLogError),
    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),
}
