//! Offline evaluation: behavioural measures over the first sequence of each
//! episode, a moving average over the episodes in which a task acted first,
//! and the first episode at which that average crosses the task threshold.

use crate::harness::episode::EpisodeLog;
use crate::harness::HarnessError;
use crate::rewards::{compute_reward, RewardConfig, TaskId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuccessCriteria {
    /// Mean speed along the walk direction, m/s.
    pub walk_speed: f64,
    /// Mean yaw rate in the turn direction, rad/s.
    pub turn_rate: f64,
    /// Mean height of the lifted foot above the stance foot, m.
    pub lift_height: f64,
    /// Mean per-step StandUpright reward.
    pub stand_reward: f64,
    /// ReachTarget reward at the last step of the sequence.
    pub reach_reward: f64,
    /// Largest allowed |roll| or |pitch| anywhere in the sequence, rad.
    pub max_tilt: f64,
    /// Moving-average window, in qualifying episodes.
    pub window: usize,
}

impl Default for SuccessCriteria {
    fn default() -> Self {
        Self {
            walk_speed: 0.1,
            turn_rate: 0.05,
            lift_height: 0.01,
            stand_reward: 0.5,
            reach_reward: 0.5,
            max_tilt: 0.4,
            window: 10,
        }
    }
}

impl SuccessCriteria {
    pub fn threshold(&self, task: TaskId) -> f64 {
        match task {
            TaskId::StandUpright => self.stand_reward,
            TaskId::LiftFoot(_) => self.lift_height,
            TaskId::TurnLeft | TaskId::TurnRight => self.turn_rate,
            TaskId::WalkForward | TaskId::WalkBackward | TaskId::WalkLeft | TaskId::WalkRight => self.walk_speed,
            TaskId::ReachTarget => self.reach_reward,
        }
    }
}

/// What happened in the first sequence of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSummary {
    pub episode: u64,
    /// The task that acted.
    pub task: TaskId,
    /// Accumulated intention reward.
    pub reward: f64,
    /// Behavioural measure compared against the task threshold.
    pub measure: f64,
    /// Largest |roll| or |pitch|, rad.
    pub max_tilt: f64,
    /// Steps actually run in the sequence.
    pub steps: usize,
    pub truncated: bool,
}

fn wrap_angle(a: f64) -> f64 {
    (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI
}

/// Behavioural measure of `task` over the steps `range` of a log.
pub fn sequence_measure(log: &EpisodeLog, task: TaskId, range: std::ops::Range<usize>) -> f64 {
    let n = range.len();
    if n == 0 {
        return 0.0;
    }
    let duration = n as f64 * log.dt;
    let pose_before = |k: usize| if k == 0 { log.initial_pose } else { log.steps[k - 1].pose };
    match task {
        TaskId::WalkForward | TaskId::WalkBackward | TaskId::WalkLeft | TaskId::WalkRight => {
            let dir = task.walk_direction().unwrap();
            let mut along = 0.0;
            for k in range {
                let (a, b) = (pose_before(k), log.steps[k].pose);
                let (s, c) = a[5].sin_cos();
                let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                along += dir[0] * (c * dx + s * dy) + dir[1] * (-s * dx + c * dy);
            }
            along / duration
        }
        TaskId::TurnLeft | TaskId::TurnRight => {
            let dir = task.turn_direction().unwrap();
            let turned: f64 = range.map(|k| wrap_angle(log.steps[k].pose[5] - pose_before(k)[5])).sum();
            dir * turned / duration
        }
        TaskId::LiftFoot(i) => {
            let total: f64 = range
                .map(|k| {
                    let c = &log.steps[k].context;
                    c.foot_heights.get(i).copied().unwrap_or(0.0) - c.foot_heights.get(c.stance_foot).copied().unwrap_or(0.0)
                })
                .sum();
            total / n as f64
        }
        TaskId::StandUpright => {
            let cfg = RewardConfig::default();
            let total: f64 = range
                .map(|k| compute_reward(TaskId::StandUpright, &log.steps[k].context, &cfg).unwrap_or(f64::NEG_INFINITY))
                .sum();
            total / n as f64
        }
        TaskId::ReachTarget => {
            let last = &log.steps[range.end - 1].context;
            compute_reward(TaskId::ReachTarget, last, &RewardConfig::default()).unwrap_or(0.0)
        }
    }
}

impl SequenceSummary {
    /// Summary of the first sequence of a log.
    pub fn from_log(log: &EpisodeLog) -> Option<Self> {
        let &task_index = log.schedule.tasks.first()?;
        let task = *log.tasks.get(task_index)?;
        let range = log.sequence_range(0);
        let max_tilt = log.steps[range.clone()].iter().map(|s| s.pose[3].abs().max(s.pose[4].abs())).fold(0.0, f64::max);
        Some(Self {
            episode: log.episode,
            task,
            reward: log.sequence_returns[0],
            measure: sequence_measure(log, task, range.clone()),
            max_tilt,
            steps: range.len(),
            truncated: range.len() < log.schedule.durations[0],
        })
    }

    /// The episode counts towards success only when it ran to completion and
    /// the torso stayed within the tilt limit.
    pub fn admissible(&self, criteria: &SuccessCriteria) -> bool {
        !self.truncated && self.max_tilt <= criteria.max_tilt
    }

    pub fn success(&self, criteria: &SuccessCriteria) -> bool {
        self.admissible(criteria) && self.measure >= criteria.threshold(self.task)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEvaluation {
    pub task: TaskId,
    pub threshold: f64,
    /// Episodes in which the task acted in the first sequence.
    pub qualifying: usize,
    /// Fewer qualifying episodes than the window.
    pub insufficient_data: bool,
    /// First episode id at which the moving performance crossed the threshold.
    pub episodes_to_threshold: Option<u64>,
    pub passed: bool,
    /// Moving performance over the last window.
    pub final_measure: Option<f64>,
    /// Moving average of accumulated intention reward over the last window.
    pub final_reward: Option<f64>,
}

/// Moving performance of each task and its first threshold crossing.
///
/// Episodes outside the tilt limit or cut short by the simulator contribute
/// zero performance, and a crossing is only recorded on an admissible episode.
pub fn evaluate(summaries: &[SequenceSummary], criteria: &SuccessCriteria) -> Result<Vec<TaskEvaluation>, HarnessError> {
    if criteria.window == 0 {
        return Err(HarnessError::Config("evaluation window must be positive".into()));
    }
    if summaries.is_empty() {
        return Err(HarnessError::InsufficientData("no episodes".into()));
    }
    let mut by_task: BTreeMap<TaskId, Vec<&SequenceSummary>> = BTreeMap::new();
    for s in summaries {
        by_task.entry(s.task).or_default().push(s);
    }
    let w = criteria.window;
    let mut out = Vec::new();
    for (task, eps) in by_task {
        let threshold = criteria.threshold(task);
        let perf: Vec<f64> = eps.iter().map(|s| if s.admissible(criteria) { s.measure } else { 0.0 }).collect();
        let mut crossing = None;
        let mut final_measure = None;
        let mut final_reward = None;
        for end in w..=eps.len() {
            let ma = perf[end - w..end].iter().sum::<f64>() / w as f64;
            final_measure = Some(ma);
            final_reward = Some(eps[end - w..end].iter().map(|s| s.reward).sum::<f64>() / w as f64);
            if crossing.is_none() && ma >= threshold && eps[end - 1].admissible(criteria) {
                crossing = Some(eps[end - 1].episode);
            }
        }
        out.push(TaskEvaluation {
            task,
            threshold,
            qualifying: eps.len(),
            insufficient_data: eps.len() < w,
            episodes_to_threshold: crossing,
            passed: crossing.is_some(),
            final_measure,
            final_reward,
        });
    }
    Ok(out)
}

/// Evaluation of full episode logs.
pub fn evaluate_logs(logs: &[EpisodeLog], criteria: &SuccessCriteria) -> Result<Vec<TaskEvaluation>, HarnessError> {
    let summaries: Vec<_> = logs.iter().filter_map(SequenceSummary::from_log).collect();
    evaluate(&summaries, criteria)
}

/// Reads the first-sequence summaries from a run's metrics stream.
pub fn read_summaries(metrics: impl AsRef<Path>) -> Result<Vec<SequenceSummary>, HarnessError> {
    #[derive(Deserialize)]
    struct Line {
        first_sequence: Option<SequenceSummary>,
    }
    let file = std::io::BufReader::new(std::fs::File::open(metrics)?);
    let mut out = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(s) = serde_json::from_str::<Line>(&line)?.first_sequence {
            out.push(s);
        }
    }
    Ok(out)
}

/// Evaluates a training output directory.
pub fn evaluate_dir(dir: impl AsRef<Path>, criteria: &SuccessCriteria) -> Result<Vec<TaskEvaluation>, HarnessError> {
    evaluate(&read_summaries(dir.as_ref().join(crate::harness::train::METRICS_FILE))?, criteria)
}
