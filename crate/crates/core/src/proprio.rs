//! On-board state estimation: heading frame, foot reference points, stance
//! foot, torso velocity estimate, swing velocities and observation assembly.
//!
//! Nothing here reads the world position or yaw of the robot.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::collections::VecDeque;
use walker_sim::actuator::ActuatorState;
use walker_sim::{RobotSpec, Simulator};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProprioError {
    #[error("pitch {0} rad is at the gimbal singularity")]
    Gimbal(f64),
    #[error("time step must be positive, got {0}")]
    TimeStep(f64),
    #[error("observation has {got} entries, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Gyro and tilt as measured on the torso.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TorsoSense {
    pub roll: f64,
    pub pitch: f64,
    /// Angular velocity in the torso frame, rad/s.
    pub gyro: [f64; 3],
}

/// Pitch closer than this to ±π/2 is treated as degenerate.
const GIMBAL_MARGIN: f64 = 1e-6;

/// Roll and pitch of a torso orientation (Z-Y-X convention), ignoring yaw.
pub fn roll_pitch(rot: &UnitQuaternion<f64>) -> (f64, f64) {
    let (roll, pitch, _yaw) = rot.euler_angles();
    (roll, pitch)
}

impl TorsoSense {
    /// Reading from the true torso orientation and body-frame angular
    /// velocity, with optional Gaussian noise on roll and pitch.
    pub fn measure<R: Rng + ?Sized>(rot: &UnitQuaternion<f64>, body_ang_vel: &Vec3, angle_noise: f64, rng: &mut R) -> Self {
        let (mut roll, mut pitch) = roll_pitch(rot);
        if angle_noise > 0.0 {
            let n = Normal::new(0.0, angle_noise).expect("finite noise level");
            roll += n.sample(rng);
            pitch += n.sample(rng);
        }
        Self { roll, pitch, gyro: [body_ang_vel.x, body_ang_vel.y, body_ang_vel.z] }
    }
}

/// Rotation taking torso-frame vectors into the heading frame: same origin,
/// world-parallel x–y plane, no yaw relative to the torso.
pub fn heading_frame(roll: f64, pitch: f64) -> Result<Matrix3<f64>, ProprioError> {
    if !(pitch.abs() < std::f64::consts::FRAC_PI_2 - GIMBAL_MARGIN) {
        return Err(ProprioError::Gimbal(pitch));
    }
    Ok(*(Rotation3::from_axis_angle(&Vec3::y_axis(), pitch) * Rotation3::from_axis_angle(&Vec3::x_axis(), roll)).matrix())
}

/// Foot reference points in the heading frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FootCloud {
    /// Per foot, every reference point.
    pub points: Vec<Vec<Vec3>>,
    /// Per foot, the reference point with the smallest z.
    pub lowest: Vec<Vec3>,
    /// Per foot swing velocity, m/s.
    pub swing: Vec<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProprioEstimate {
    /// Estimated torso velocity relative to the ground, heading frame.
    pub torso_velocity: Vec3,
    pub stance_foot: usize,
    pub v_xy: [f64; 2],
}

/// Index of the smallest `z`, ties resolved towards the lower index.
fn argmin_z<'a>(points: impl Iterator<Item = &'a Vec3>) -> usize {
    let mut best = 0;
    let mut best_z = f64::INFINITY;
    for (i, p) in points.enumerate() {
        if p.z < best_z {
            best = i;
            best_z = p.z;
        }
    }
    best
}

/// Foot reference points of `q` in the heading frame, from leg kinematics.
pub fn foot_points(sim: &Simulator, q: &[f64], heading: &Matrix3<f64>) -> Vec<Vec<Vec3>> {
    let kin = sim.kinematics_at(&Matrix3::identity(), &Vec3::zeros(), q);
    kin.foot_points.iter().map(|foot| foot.iter().map(|p| heading * p).collect()).collect()
}

/// One estimation step. `prev` is the cloud of the preceding control step,
/// or `None` at the start of an episode (all velocities zero).
pub fn estimate(
    sim: &Simulator,
    q: &[f64],
    sense: &TorsoSense,
    prev: Option<&FootCloud>,
    dt: f64,
) -> Result<(FootCloud, ProprioEstimate), ProprioError> {
    if !(dt > 0.0) {
        return Err(ProprioError::TimeStep(dt));
    }
    let heading = heading_frame(sense.roll, sense.pitch)?;
    let points = foot_points(sim, q, &heading);
    let lowest: Vec<Vec3> = points.iter().map(|foot| foot[argmin_z(foot.iter())]).collect();
    let stance = argmin_z(lowest.iter());
    let deltas: Vec<Vec3> = match prev {
        Some(p) if p.lowest.len() == lowest.len() => lowest.iter().zip(&p.lowest).map(|(now, before)| (now - before) / dt).collect(),
        _ => vec![Vec3::zeros(); lowest.len()],
    };
    let torso_velocity = deltas.get(stance).map_or(Vec3::zeros(), |d| -d);
    let swing = deltas.iter().map(|d| d + torso_velocity).collect();
    let est = ProprioEstimate { torso_velocity, stance_foot: stance, v_xy: [torso_velocity.x, torso_velocity.y] };
    Ok((FootCloud { points, lowest, swing }, est))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ObservationConfig {
    /// Number of stacked torso/foot readings.
    pub history: usize,
    /// Set-point filter width ν.
    pub filter_width: usize,
    /// Standard deviation of roll/pitch noise, rad.
    pub angle_noise: f64,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self { history: 2, filter_width: 5, angle_noise: 0.0 }
    }
}

/// Per-actuator entries: position, velocity, deflection, deflection
/// velocity, two temperatures, then the filter window.
pub fn actuator_block_dim(cfg: &ObservationConfig) -> usize {
    6 + cfg.filter_width
}

pub fn observation_dim(spec: &RobotSpec, cfg: &ObservationConfig) -> usize {
    let foot = spec.num_feet() * spec.points_per_foot() * 3;
    spec.num_joints() * actuator_block_dim(cfg) + cfg.history * (2 + foot + 3)
}

/// What a module reports about its own joint.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorReading {
    pub position: f64,
    pub velocity: f64,
    pub deflection: f64,
    pub deflection_velocity: f64,
    pub winding_temp: f64,
    pub housing_temp: f64,
    /// Filter window, oldest first.
    pub filter: Vec<f64>,
}

impl ActuatorReading {
    pub fn read(state: &ActuatorState, joint_pos: f64, joint_vel: f64) -> Self {
        Self {
            position: joint_pos,
            velocity: joint_vel,
            deflection: state.deflection(joint_pos),
            deflection_velocity: state.deflection_velocity(joint_vel),
            winding_temp: state.winding_temp,
            housing_temp: state.housing_temp,
            filter: state.filter.values().collect(),
        }
    }
}

/// Observation vector: actuator blocks, then `h` rolls, `h` pitches, `h`
/// foot clouds and `h` gyro readings, newest first. Missing history entries
/// are zero.
pub fn assemble_observation(
    spec: &RobotSpec,
    actuators: &[ActuatorReading],
    torso: &[TorsoSense],
    feet: &[FootCloud],
    cfg: &ObservationConfig,
) -> Result<Vec<f64>, ProprioError> {
    let expected = observation_dim(spec, cfg);
    let mut obs = Vec::with_capacity(expected);
    for a in actuators {
        obs.extend_from_slice(&[a.position, a.velocity, a.deflection, a.deflection_velocity, a.winding_temp, a.housing_temp]);
        if a.filter.len() != cfg.filter_width {
            return Err(ProprioError::Dimension { expected: cfg.filter_width, got: a.filter.len() });
        }
        obs.extend_from_slice(&a.filter);
    }
    let h = cfg.history;
    let torso_at = |k: usize| torso.get(k).copied().unwrap_or_default();
    obs.extend((0..h).map(|k| torso_at(k).roll));
    obs.extend((0..h).map(|k| torso_at(k).pitch));
    let foot_len = spec.num_feet() * spec.points_per_foot() * 3;
    for k in 0..h {
        match feet.get(k) {
            Some(cloud) => {
                let before = obs.len();
                for p in cloud.points.iter().flatten() {
                    obs.extend_from_slice(p.as_slice());
                }
                if obs.len() - before != foot_len {
                    return Err(ProprioError::Dimension { expected: foot_len, got: obs.len() - before });
                }
            }
            None => obs.extend(std::iter::repeat_n(0.0, foot_len)),
        }
    }
    for k in 0..h {
        obs.extend_from_slice(&torso_at(k).gyro);
    }
    if obs.len() != expected {
        return Err(ProprioError::Dimension { expected, got: obs.len() });
    }
    Ok(obs)
}

/// Running proprioception for one episode: keeps the previous foot cloud
/// and the torso/foot histories.
#[derive(Debug, Clone)]
pub struct Proprioception {
    pub cfg: ObservationConfig,
    torso: VecDeque<TorsoSense>,
    feet: VecDeque<FootCloud>,
    last: Option<(FootCloud, ProprioEstimate)>,
}

impl Proprioception {
    pub fn new(cfg: ObservationConfig) -> Self {
        Self { cfg, torso: VecDeque::new(), feet: VecDeque::new(), last: None }
    }

    pub fn reset(&mut self) {
        self.torso.clear();
        self.feet.clear();
        self.last = None;
    }

    /// Incorporate a new reading taken `dt` after the previous one.
    pub fn update(&mut self, sim: &Simulator, q: &[f64], sense: TorsoSense, dt: f64) -> Result<ProprioEstimate, ProprioError> {
        let prev = self.last.as_ref().map(|(c, _)| c);
        let (cloud, est) = estimate(sim, q, &sense, prev, dt)?;
        self.torso.push_front(sense);
        self.feet.push_front(cloud.clone());
        self.torso.truncate(self.cfg.history);
        self.feet.truncate(self.cfg.history);
        self.last = Some((cloud, est));
        Ok(est)
    }

    pub fn latest(&self) -> Option<(&FootCloud, &ProprioEstimate, &TorsoSense)> {
        let (c, e) = self.last.as_ref()?;
        Some((c, e, self.torso.front()?))
    }

    pub fn observation(&self, spec: &RobotSpec, actuators: &[ActuatorReading]) -> Result<Vec<f64>, ProprioError> {
        let torso: Vec<TorsoSense> = self.torso.iter().copied().collect();
        let feet: Vec<FootCloud> = self.feet.iter().cloned().collect();
        assemble_observation(spec, actuators, &torso, &feet, &self.cfg)
    }
}
