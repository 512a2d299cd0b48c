//! One robot in the world as the agent sees it: observations built only
//! from on-board sensing, rewards for every task, and episode resets.

use crate::harness::config::{make_pedestal_terrain, ExperimentConfig, TerrainSpec};
use crate::harness::HarnessError;
use crate::proprio::{
    actuator_block_dim, observation_dim, roll_pitch, ActuatorReading, ObservationConfig, Proprioception, TorsoSense,
};
use crate::rewards::{compute_reward, RewardConfig, RewardContext, TaskId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use walker_sim::{zoo, Plant, Terrain};

/// Temperatures enter the networks as `(T − 25 °C) / 10`.
const TEMP_OFFSET: f64 = 25.0;
const TEMP_SCALE: f64 = 0.1;

/// Ground-truth pose, kept for logs and evaluation only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruePose {
    pub position: [f64; 3],
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    /// One reward per task, in task-set order.
    pub rewards: Vec<f64>,
    pub context: RewardContext,
}

#[derive(Debug, Clone)]
pub struct Env {
    pub plant: Plant,
    pub proprio: Proprioception,
    pub tasks: Vec<TaskId>,
    pub reward_cfg: RewardConfig,
    pub dt: f64,
    /// World x–y of the target, when reaching is among the tasks.
    pub target: Option<[f64; 2]>,
    terrain: TerrainSpec,
    target_range: [f64; 2],
    joint_jitter: f64,
    noise_rng: ChaCha8Rng,
}

impl Env {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let spec = zoo::resolve(&cfg.robot)?;
        let tasks = cfg.task_set();
        for t in &tasks {
            if let TaskId::LiftFoot(i) = t {
                if *i >= spec.num_feet() {
                    return Err(HarnessError::Config(format!("{t} on a robot with {} feet", spec.num_feet())));
                }
            }
        }
        let plant = Plant::new(spec, cfg.physics, Terrain::flat(), cfg.observation.filter_width)?;
        Ok(Self {
            plant,
            proprio: Proprioception::new(cfg.observation),
            tasks,
            reward_cfg: cfg.reward,
            dt: cfg.control_dt,
            target: None,
            terrain: cfg.terrain,
            target_range: cfg.target_range,
            joint_jitter: cfg.joint_jitter,
            noise_rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn obs_config(&self) -> &ObservationConfig {
        &self.proprio.cfg
    }

    fn has_target(&self) -> bool {
        self.tasks.contains(&TaskId::ReachTarget)
    }

    pub fn obs_dim(&self) -> usize {
        observation_dim(&self.plant.spec, self.obs_config()) + if self.has_target() { 2 } else { 0 }
    }

    pub fn action_dim(&self) -> usize {
        self.plant.spec.action_dim()
    }

    pub fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.plant.spec.joints.iter().map(|j| (j.action_bounds[0], j.action_bounds[1])).unzip()
    }

    /// Fixed input map for the networks: only the temperature entries of the
    /// actuator blocks are rescaled.
    pub fn input_scaling(&self) -> (Vec<f64>, Vec<f64>) {
        let block = actuator_block_dim(self.obs_config());
        let n = self.plant.spec.num_joints() * block;
        let mut offset = vec![0.0; n];
        let mut scale = vec![1.0; n];
        for j in 0..self.plant.spec.num_joints() {
            for k in [4, 5] {
                offset[j * block + k] = TEMP_OFFSET;
                scale[j * block + k] = TEMP_SCALE;
            }
        }
        (offset, scale)
    }

    /// New terrain, jittered default pose, target spawn and fresh estimator.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<f64>, HarnessError> {
        self.plant.terrain = match self.terrain {
            TerrainSpec::Flat => Terrain::flat(),
            TerrainSpec::Pedestals { h_max } => make_pedestal_terrain(h_max, rng)?,
        };
        let q: Vec<f64> = self
            .plant
            .spec
            .default_pose()
            .iter()
            .map(|&a| if self.joint_jitter > 0.0 { a + rng.random_range(-self.joint_jitter..=self.joint_jitter) } else { a })
            .collect();
        self.plant.reset(&q, [0.0, 0.0], 0.0)?;
        self.target = if self.has_target() {
            let [lo, hi] = self.target_range;
            let d = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let bearing = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            Some([d * bearing.cos(), d * bearing.sin()])
        } else {
            None
        };
        self.noise_rng = ChaCha8Rng::seed_from_u64(rng.random());
        self.proprio.reset();
        self.sense()?;
        Ok(self.observation()?)
    }

    fn sense(&mut self) -> Result<(), HarnessError> {
        let s = &self.plant.state;
        let sense = TorsoSense::measure(&s.base_rot, &s.base_ang_vel, self.proprio.cfg.angle_noise, &mut self.noise_rng);
        self.proprio.update(&self.plant.sim, &s.q, sense, self.dt)?;
        Ok(())
    }

    pub fn true_pose(&self) -> TruePose {
        let s = &self.plant.state;
        let (roll, pitch) = roll_pitch(&s.base_rot);
        let (_, _, yaw) = s.base_rot.euler_angles();
        TruePose { position: [s.base_pos.x, s.base_pos.y, s.base_pos.z], roll, pitch, yaw }
    }

    /// Target relative to the torso in heading-frame x–y.
    fn target_rel(&self) -> Option<[f64; 2]> {
        let t = self.target?;
        let pose = self.true_pose();
        let (dx, dy) = (t[0] - pose.position[0], t[1] - pose.position[1]);
        let (s, c) = pose.yaw.sin_cos();
        Some([c * dx + s * dy, -s * dx + c * dy])
    }

    /// The agent's input: actuator blocks, torso and foot history, and the
    /// relative target when reaching is a task.
    pub fn observation(&self) -> Result<Vec<f64>, HarnessError> {
        let s = &self.plant.state;
        let readings: Vec<ActuatorReading> =
            self.plant.actuators.iter().enumerate().map(|(j, a)| ActuatorReading::read(a, s.q[j], s.qdot[j])).collect();
        let mut obs = self.proprio.observation(&self.plant.spec, &readings)?;
        if self.has_target() {
            obs.extend_from_slice(&self.target_rel().unwrap_or([0.0, 0.0]));
        }
        Ok(obs)
    }

    pub fn reward_context(&self) -> Result<RewardContext, HarnessError> {
        let (cloud, est, sense) = self.proprio.latest().ok_or_else(|| HarnessError::Config("environment not reset".into()))?;
        Ok(RewardContext {
            roll: sense.roll,
            pitch: sense.pitch,
            gyro_z: sense.gyro[2],
            v_xy: est.v_xy,
            foot_heights: cloud.lowest.iter().map(|p| p.z).collect(),
            swing_velocities: cloud.swing.iter().map(|v| [v.x, v.y, v.z]).collect(),
            stance_foot: est.stance_foot,
            target_rel: self.target_rel(),
        })
    }

    pub fn rewards(&self, ctx: &RewardContext) -> Result<Vec<f64>, HarnessError> {
        Ok(self.tasks.iter().map(|&t| compute_reward(t, ctx, &self.reward_cfg)).collect::<Result<_, _>>()?)
    }

    /// Applies an action (offsets from the default pose) for one control period.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult, HarnessError> {
        let setpoints = self.plant.spec.action_to_setpoints(action)?;
        self.plant.control_step(&setpoints, self.dt)?;
        if !self.plant.state.is_finite() {
            return Err(HarnessError::Unstable("non-finite simulator state".into()));
        }
        self.sense()?;
        let context = self.reward_context()?;
        let rewards = self.rewards(&context)?;
        Ok(StepResult { obs: self.observation()?, rewards, context })
    }
}
