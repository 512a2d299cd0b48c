//! Experiment orchestration: environments, the episode protocol, training,
//! offline evaluation and trajectory export.

pub mod config;
pub mod env;
pub mod episode;
pub mod evaluate;
pub mod traj;
pub mod train;

pub use config::{make_pedestal_terrain, ExperimentConfig, TerrainSpec};
pub use env::{Env, StepResult, TruePose};
pub use episode::{run_episode, Controller, EpisodeLog, Greedy, StepRecord, UniformRandom, ZeroAction};
pub use evaluate::{evaluate, evaluate_dir, evaluate_logs, read_summaries, SequenceSummary, SuccessCriteria, TaskEvaluation};
pub use traj::{export_trajectory, read_trajectory};
pub use train::{train, EpisodeMetrics, TrainOutcome, Trainer};

use crate::agent::AgentError;
use crate::proprio::ProprioError;
use crate::rewards::RewardError;
use crate::scheduler::SchedulerError;
use walker_sim::{PlantError, SpecError};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("simulation unstable: {0}")]
    Unstable(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Proprio(#[from] ProprioError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
}
