//! Multi-task soft actor-critic: one policy head and one critic head per
//! task over shared trunks, trained off-policy from a shared replay buffer.

pub mod policy;
pub mod replay;
pub mod sac;
pub mod tower;

pub use policy::{GaussianPolicy, PolicySample};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use sac::{ActionValue, Critic, LearnStats, Sac};
pub use tower::{Tower, TowerAdam, TowerGrads, TowerShape};

use serde::{Deserialize, Serialize};
use walker_nn::{CheckpointError, NnError};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("unknown task index {0}")]
    UnknownTask(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite {0}, update skipped")]
    NonFinite(&'static str),
    #[error("replay buffer is empty")]
    EmptyReplay,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub gamma: f64,
    pub lr: f64,
    /// Entropy weight α.
    pub alpha: f64,
    pub batch_size: usize,
    /// Learner steps between hard target-network copies.
    pub target_period: usize,
    pub learner_steps_per_episode: usize,
    pub replay_capacity: usize,
    pub policy_shape: TowerShape,
    pub critic_shape: TowerShape,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 2e-4,
            alpha: 1e-2,
            batch_size: 256,
            target_period: 100,
            learner_steps_per_episode: 400,
            replay_capacity: 4_000_000,
            policy_shape: TowerShape { trunk: vec![256, 256], head: vec![100, 100] },
            critic_shape: TowerShape { trunk: vec![400, 400], head: vec![300] },
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Config(m.into()));
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be finite and nonnegative");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.target_period == 0 || self.replay_capacity == 0 {
            return bad("batch size, target period and replay capacity must be positive");
        }
        if self.policy_shape.trunk.is_empty() || self.critic_shape.trunk.is_empty() {
            return bad("trunks need at least one layer");
        }
        Ok(())
    }
}
