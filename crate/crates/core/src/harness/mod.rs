//! Training loop, evaluation, experiment grid and output files.

mod config;
mod eval;
mod grid;
mod metrics;
mod train;

pub use config::{Engine, ExperimentConfig, PRESETS};
pub use eval::{evaluate, evaluate_checkpoint, EvalReport, FleePilot, OaPilot, PidPilot, Pilot, TrainedPilot};
pub use grid::{
    aggregate, plot_script, run_grid, write_figures, AggregateRow, ConfigSummary, GridReport, RunStatus, FIGURES,
};
pub use metrics::{mean_var, CheckpointRow, EpisodeMetrics, RunMetrics, CURVES_HEADER, EPISODES_HEADER};
pub use train::{train, train_vanilla, RunCheckpoint, RunOutput, StepAudit, TrainOptions, RUN_CHECKPOINT_VERSION};

use thiserror::Error;

use crate::controllers::{oa_action, pid_action, Action, ControllerId, DdpgError};
use crate::replay::ReplayError;
use crate::sim::{Observation, SimError};
use crate::switch::SwitchError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Ddpg(#[from] DdpgError),
    #[error(transparent)]
    Switch(#[from] SwitchError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("run {name} seed {seed}: {source}")]
    Run {
        name: String,
        seed: u64,
        #[source]
        source: Box<HarnessError>,
    },
}

/// Action of the controller `c`; OA borrows its linear speed from `proposal`.
pub fn heuristic_action(
    c: ControllerId,
    obs: &Observation,
    beam_angles: &[f64],
    proposal: Action,
    config: &ExperimentConfig,
) -> Action {
    match c {
        ControllerId::Ddpg => proposal,
        ControllerId::Pid => pid_action(&config.pid, obs.goal_local, &config.bounds),
        ControllerId::Oa => oa_action(&config.oa, obs.latest_scan(), beam_angles, proposal.v(), &config.bounds),
    }
}
