//! Proprioceptive reward kernels for the locomotion skills and the target
//! reaching reward.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Lift height at which the lift incentive saturates, m.
pub const LIFT_THRESHOLD: f64 = 0.05;
/// Beyond this torso-target distance the target reward is zero, m.
pub const REACH_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum TaskId {
    StandUpright,
    LiftFoot(usize),
    TurnLeft,
    TurnRight,
    WalkForward,
    WalkBackward,
    WalkLeft,
    WalkRight,
    ReachTarget,
}

impl TaskId {
    /// Unit direction in the heading-frame x–y plane for the walk tasks.
    pub fn walk_direction(self) -> Option<[f64; 2]> {
        match self {
            TaskId::WalkForward => Some([1.0, 0.0]),
            TaskId::WalkBackward => Some([-1.0, 0.0]),
            TaskId::WalkRight => Some([0.0, -1.0]),
            TaskId::WalkLeft => Some([0.0, 1.0]),
            _ => None,
        }
    }

    pub fn turn_direction(self) -> Option<f64> {
        match self {
            TaskId::TurnLeft => Some(1.0),
            TaskId::TurnRight => Some(-1.0),
            _ => None,
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskId::StandUpright => f.write_str("stand"),
            TaskId::LiftFoot(i) => write!(f, "lift_foot:{i}"),
            TaskId::TurnLeft => f.write_str("turn_left"),
            TaskId::TurnRight => f.write_str("turn_right"),
            TaskId::WalkForward => f.write_str("walk_forward"),
            TaskId::WalkBackward => f.write_str("walk_backward"),
            TaskId::WalkLeft => f.write_str("walk_left"),
            TaskId::WalkRight => f.write_str("walk_right"),
            TaskId::ReachTarget => f.write_str("reach_target"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("precision margin must be positive, got {0}")]
    Margin(f64),
    #[error("reach_target needs a target position")]
    MissingTarget,
    #[error("foot index {index} out of range for {feet} feet")]
    FootIndex { index: usize, feet: usize },
}

impl FromStr for TaskId {
    type Err = RewardError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let task = match s {
            "stand" => TaskId::StandUpright,
            "turn_left" => TaskId::TurnLeft,
            "turn_right" => TaskId::TurnRight,
            "walk_forward" => TaskId::WalkForward,
            "walk_backward" => TaskId::WalkBackward,
            "walk_left" => TaskId::WalkLeft,
            "walk_right" => TaskId::WalkRight,
            "reach_target" => TaskId::ReachTarget,
            _ => match s.strip_prefix("lift_foot:").map(str::parse) {
                Some(Ok(i)) => TaskId::LiftFoot(i),
                _ => return Err(RewardError::UnknownTask(s.into())),
            },
        };
        Ok(task)
    }
}

impl From<TaskId> for String {
    fn from(t: TaskId) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for TaskId {
    type Error = RewardError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Everything the reward kernels read, all expressed in the heading frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardContext {
    pub roll: f64,
    pub pitch: f64,
    /// Gyroscope z in the torso frame, rad/s.
    pub gyro_z: f64,
    /// Estimated torso velocity, x–y, m/s.
    pub v_xy: [f64; 2],
    /// Height of each foot's lowest reference point, m.
    pub foot_heights: Vec<f64>,
    pub swing_velocities: Vec<[f64; 3]>,
    pub stance_foot: usize,
    /// Target minus torso position, x–y, m.
    pub target_rel: Option<[f64; 2]>,
}

/// Reward options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Use `min(1, h)` for the lift incentive instead of `min(1, h / 5 cm)`.
    pub raw_lift: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { raw_lift: false }
    }
}

fn prec_weight(m: f64) -> f64 {
    0.95f64.sqrt().atanh() / m
}

/// Saturating precision cost; `m` is the deviation that costs 0.95.
pub fn c_prec(v: f64, t: f64, m: f64) -> Result<f64, RewardError> {
    if !(m > 0.0) {
        return Err(RewardError::Margin(m));
    }
    Ok(((v - t) * prec_weight(m)).abs().tanh().powi(2))
}

fn cost(v: f64, m: f64) -> f64 {
    ((v * prec_weight(m)).abs()).tanh().powi(2)
}

pub fn r_up(roll: f64, pitch: f64) -> f64 {
    1.0 - cost((roll * roll + pitch * pitch).sqrt(), 0.4)
}

pub fn r_still(v_xy: [f64; 2]) -> f64 {
    -(v_xy[0].hypot(v_xy[1]))
}

/// Attenuates `r` by the torso spin rate; negative values pass unchanged.
pub fn r_rot(gyro_z: f64, r: f64) -> f64 {
    let k = 1.0 - cost(gyro_z, 0.5);
    (k * r).min(r)
}

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn reach_reward(target_rel: [f64; 2]) -> f64 {
    (1.0 - target_rel[0].hypot(target_rel[1]) / REACH_RADIUS).clamp(0.0, 1.0)
}

pub fn compute_reward(task: TaskId, ctx: &RewardContext, cfg: &RewardConfig) -> Result<f64, RewardError> {
    let up = r_up(ctx.roll, ctx.pitch);
    let still = r_still(ctx.v_xy);
    let reward = match task {
        TaskId::StandUpright => r_rot(ctx.gyro_z, still + up),
        TaskId::TurnLeft | TaskId::TurnRight => task.turn_direction().unwrap() * ctx.gyro_z + 0.1 * up,
        TaskId::LiftFoot(i) => {
            let feet = ctx.foot_heights.len();
            if i >= feet || ctx.stance_foot >= feet {
                return Err(RewardError::FootIndex { index: i.max(ctx.stance_foot), feet });
            }
            let h = ctx.foot_heights[i] - ctx.foot_heights[ctx.stance_foot];
            let lift = if cfg.raw_lift { h.min(1.0) } else { (h / LIFT_THRESHOLD).min(1.0) };
            r_rot(ctx.gyro_z, lift + 0.1 * still + 0.1 * up)
        }
        TaskId::WalkForward | TaskId::WalkBackward | TaskId::WalkLeft | TaskId::WalkRight => {
            let dir = task.walk_direction().unwrap();
            let torso = r_rot(ctx.gyro_z, dot2(dir, ctx.v_xy));
            let n = ctx.swing_velocities.len().max(1) as f64;
            let swing = ctx.swing_velocities.iter().map(|v| dot2(dir, [v[0], v[1]])).sum::<f64>() / n;
            torso + 0.5 * r_rot(ctx.gyro_z, swing) + 0.1 * up
        }
        TaskId::ReachTarget => reach_reward(ctx.target_rel.ok_or(RewardError::MissingTarget)?),
    };
    Ok(reward)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_names_round_trip() {
        for name in
            ["stand", "lift_foot:3", "turn_left", "turn_right", "walk_forward", "walk_backward", "walk_left", "walk_right", "reach_target"]
        {
            assert_eq!(name.parse::<TaskId>().unwrap().to_string(), name);
        }
        assert!("fly".parse::<TaskId>().is_err());
        assert!("lift_foot:x".parse::<TaskId>().is_err());
        let json = serde_json::to_string(&TaskId::LiftFoot(2)).unwrap();
        assert_eq!(json, "\"lift_foot:2\"");
    }

    #[test]
    fn margin_must_be_positive() {
        assert_eq!(c_prec(0.0, 0.0, 0.0), Err(RewardError::Margin(0.0)));
    }
}
