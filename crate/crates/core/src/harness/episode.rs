//! The episode protocol: reset, then for every control step observe, act
//! for the scheduled task, simulate, and reward every task.

use crate::agent::{Sac, Transition};
use crate::harness::env::Env;
use crate::harness::HarnessError;
use crate::proprio::ProprioError;
use crate::rewards::{RewardContext, TaskId};
use crate::scheduler::Schedule;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use walker_nn::Scalar;

/// Chooses actions from observations.
pub trait Controller {
    /// Action (offsets from the default pose) and its log-probability.
    fn act(&self, obs: &[f64], task: usize, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, f64), HarnessError>;
}

impl<T: Scalar> Controller for Sac<T> {
    fn act(&self, obs: &[f64], task: usize, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, f64), HarnessError> {
        let s = self.policy.sample(obs, task, rng)?;
        Ok((s.action, s.log_prob))
    }
}

/// Mean action of a policy, without exploration noise.
pub struct Greedy<'a, T: Scalar>(pub &'a Sac<T>);

impl<T: Scalar> Controller for Greedy<'_, T> {
    fn act(&self, obs: &[f64], task: usize, _rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, f64), HarnessError> {
        Ok((self.0.policy.mean_action(obs, task)?, 0.0))
    }
}

/// Holds the default pose.
pub struct ZeroAction(pub usize);

impl Controller for ZeroAction {
    fn act(&self, _obs: &[f64], _task: usize, _rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, f64), HarnessError> {
        Ok((vec![0.0; self.0], 0.0))
    }
}

/// Uniform actions inside the bounds.
pub struct UniformRandom {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl Controller for UniformRandom {
    fn act(&self, _obs: &[f64], _task: usize, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, f64), HarnessError> {
        let a = self.low.iter().zip(&self.high).map(|(&l, &h)| rng.random_range(l..h)).collect();
        let log_prob = -self.low.iter().zip(&self.high).map(|(l, h)| (h - l).ln()).sum::<f64>();
        Ok((a, log_prob))
    }
}

/// Torso position and orientation: `[x, y, z, roll, pitch, yaw]`.
pub type PoseRecord = [f64; 6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Time at the end of the step, s.
    pub t: f64,
    /// Index of the acting task.
    pub task: usize,
    pub action: Vec<f64>,
    /// Reward of every task for this step.
    pub rewards: Vec<f64>,
    pub context: RewardContext,
    /// Ground truth, for offline analysis only.
    pub pose: PoseRecord,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: u64,
    pub tasks: Vec<TaskId>,
    pub schedule: Schedule,
    pub dt: f64,
    pub initial_pose: PoseRecord,
    pub target: Option<[f64; 2]>,
    pub steps: Vec<StepRecord>,
    /// Accumulated reward of the acting task over each sequence.
    pub sequence_returns: Vec<f64>,
    /// Why the episode ended early, if it did.
    pub truncated: Option<String>,
}

impl EpisodeLog {
    /// Sum of one task's reward over the whole episode.
    pub fn task_return(&self, task: usize) -> f64 {
        self.steps.iter().map(|s| s.rewards[task]).sum()
    }

    /// Step range of sequence `seq`, clipped to the steps actually run.
    pub fn sequence_range(&self, seq: usize) -> std::ops::Range<usize> {
        let start: usize = self.schedule.durations[..seq].iter().sum();
        let end = start + self.schedule.durations[seq];
        start.min(self.steps.len())..end.min(self.steps.len())
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), HarnessError> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, HarnessError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

fn pose_record(env: &Env) -> PoseRecord {
    let p = env.true_pose();
    [p.position[0], p.position[1], p.position[2], p.roll, p.pitch, p.yaw]
}

/// Runs one episode. Transitions carry the rewards of every task. A
/// simulator failure truncates the episode and is recorded in the log.
pub fn run_episode(
    env: &mut Env,
    controller: &dyn Controller,
    schedule: &Schedule,
    episode: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(EpisodeLog, Vec<Transition>), HarnessError> {
    let mut obs = env.reset(rng)?;
    let mut log = EpisodeLog {
        episode,
        tasks: env.tasks.clone(),
        schedule: schedule.clone(),
        dt: env.dt,
        initial_pose: pose_record(env),
        target: env.target,
        steps: Vec::with_capacity(schedule.total_steps()),
        sequence_returns: vec![0.0; schedule.tasks.len()],
        truncated: None,
    };
    let mut transitions = Vec::with_capacity(schedule.total_steps());
    for step in 0..schedule.total_steps() {
        let (task, seq) = schedule.at(step).expect("step inside the schedule");
        let (action, log_prob) = controller.act(&obs, task, rng)?;
        let result = match env.step(&action) {
            Ok(r) => r,
            Err(HarnessError::Unstable(msg)) => {
                log.truncated = Some(msg);
                break;
            }
            Err(e @ (HarnessError::Plant(_) | HarnessError::Proprio(ProprioError::Gimbal(_)))) => {
                log.truncated = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        log.sequence_returns[seq] += result.rewards[task];
        transitions.push(Transition {
            obs: std::mem::take(&mut obs),
            action: action.clone(),
            rewards: result.rewards.clone(),
            next_obs: result.obs.clone(),
            task,
            log_prob,
            episode: episode as u32,
            step: step as u32,
        });
        log.steps.push(StepRecord {
            t: (step + 1) as f64 * env.dt,
            task,
            action,
            rewards: result.rewards,
            context: result.context,
            pose: pose_record(env),
            q: env.plant.state.q.clone(),
        });
        obs = result.obs;
    }
    Ok((log, transitions))
}
