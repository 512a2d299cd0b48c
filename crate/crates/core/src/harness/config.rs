//! Experiment configuration; the TOML file mirrors the command-line flags.

use crate::agent::Hyperparams;
use crate::harness::HarnessError;
use crate::proprio::ObservationConfig;
use crate::rewards::{RewardConfig, TaskId};
use crate::scheduler::{QConfig, SchedulerKind};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use walker_sim::{PhysicsConfig, Terrain};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "WALKER_OUT";
pub const PEDESTAL_SIZE: f64 = 0.25;
/// Odd, so the start position sits in the middle of a pedestal.
pub const PEDESTAL_CELLS: usize = 41;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum TerrainSpec {
    Flat,
    /// Pedestal heights drawn from `[0, h_max]` every episode.
    Pedestals { h_max: f64 },
}

impl fmt::Display for TerrainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerrainSpec::Flat => f.write_str("flat"),
            TerrainSpec::Pedestals { h_max } => write!(f, "pedestals:{h_max}"),
        }
    }
}

impl FromStr for TerrainSpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "flat" {
            return Ok(TerrainSpec::Flat);
        }
        let bad = || HarnessError::Config(format!("terrain `{s}` (expected flat or pedestals:<h_max>)"));
        let h_max: f64 = s.strip_prefix("pedestals:").ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if !(h_max.is_finite() && h_max >= 0.0) {
            return Err(HarnessError::Config(format!("h_max must be nonnegative, got {h_max}")));
        }
        Ok(TerrainSpec::Pedestals { h_max })
    }
}

impl From<TerrainSpec> for String {
    fn from(t: TerrainSpec) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for TerrainSpec {
    type Error = HarnessError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Pedestal field centred on the start position; `h_max = 0` is flat.
pub fn make_pedestal_terrain<R: Rng + ?Sized>(h_max: f64, rng: &mut R) -> Result<Terrain, HarnessError> {
    Terrain::pedestals(h_max, PEDESTAL_SIZE, PEDESTAL_CELLS, PEDESTAL_CELLS, rng).map_err(|e| HarnessError::Config(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Bundled robot name or path to a robot file.
    pub robot: String,
    pub tasks: Vec<TaskId>,
    pub scheduler: SchedulerKind,
    /// Task whose return drives SAC-Q; added to the task set if missing.
    pub main_task: Option<TaskId>,
    pub episodes: usize,
    pub seed: u64,
    pub terrain: TerrainSpec,
    /// Output directory; relative paths resolve against `$WALKER_OUT`.
    pub out: Option<PathBuf>,
    pub episode_steps: usize,
    /// Control period, s.
    pub control_dt: f64,
    pub sequences: usize,
    /// Distance range for target spawns, m.
    pub target_range: [f64; 2],
    /// Uniform joint-angle jitter at reset, rad.
    pub joint_jitter: f64,
    /// Episodes with uniformly random actions before the policy acts.
    pub random_episodes: usize,
    /// Checkpoint cadence in episodes; 0 keeps only the final checkpoint.
    pub checkpoint_every: usize,
    /// Full trajectory log cadence in episodes; 0 disables them.
    pub trajectory_every: usize,
    pub observation: ObservationConfig,
    pub reward: RewardConfig,
    pub agent: Hyperparams,
    pub scheduler_q: QConfig,
    pub physics: PhysicsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            robot: "daisy4".into(),
            tasks: vec![TaskId::StandUpright],
            scheduler: SchedulerKind::Uniform,
            main_task: None,
            episodes: 100,
            seed: 0,
            terrain: TerrainSpec::Flat,
            out: None,
            episode_steps: 800,
            control_dt: 0.025,
            sequences: 2,
            target_range: [1.0, 3.0],
            joint_jitter: 0.01,
            random_episodes: 0,
            checkpoint_every: 50,
            trajectory_every: 0,
            observation: ObservationConfig::default(),
            reward: RewardConfig::default(),
            agent: Hyperparams::default(),
            scheduler_q: QConfig::default(),
            physics: PhysicsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.tasks.is_empty() {
            return bad("at least one task is required".into());
        }
        if !(self.control_dt > 0.0 && self.control_dt.is_finite()) {
            return bad(format!("control_dt must be positive, got {}", self.control_dt));
        }
        if self.sequences == 0 || self.episode_steps == 0 || self.episode_steps % self.sequences != 0 {
            return bad(format!("{} episode steps cannot be split into {} sequences", self.episode_steps, self.sequences));
        }
        let [lo, hi] = self.target_range;
        if !(lo >= 0.0 && hi >= lo) {
            return bad(format!("target range [{lo}, {hi}] is invalid"));
        }
        if !(self.joint_jitter >= 0.0) {
            return bad("joint jitter must be nonnegative".into());
        }
        self.agent.validate()?;
        Ok(())
    }

    /// Tasks with a policy and critic head: the listed tasks, then the main
    /// task if it is not among them.
    pub fn task_set(&self) -> Vec<TaskId> {
        let mut tasks = Vec::new();
        for &t in self.tasks.iter().chain(self.main_task.iter()) {
            if !tasks.contains(&t) {
                tasks.push(t);
            }
        }
        tasks
    }

    /// Index of the main task in [`Self::task_set`], defaulting to the first task.
    pub fn main_index(&self) -> usize {
        self.main_task.and_then(|m| self.task_set().iter().position(|&t| t == m)).unwrap_or(0)
    }

    /// Output directory with `$WALKER_OUT` applied to relative paths.
    pub fn output_dir(&self) -> Option<PathBuf> {
        let out = self.out.as_ref()?;
        match std::env::var_os(OUT_ENV) {
            Some(root) if out.is_relative() => Some(PathBuf::from(root).join(out)),
            _ => Some(out.clone()),
        }
    }
}
