//! Training loop: episodes alternate with learner updates on the shared
//! replay, everything seeded from the experiment seed.

use crate::agent::{LearnStats, ReplayBuffer, Sac};
use crate::harness::config::ExperimentConfig;
use crate::harness::env::Env;
use crate::harness::episode::{run_episode, Controller, EpisodeLog, UniformRandom};
use crate::harness::evaluate::{evaluate, SequenceSummary, SuccessCriteria, TaskEvaluation};
use crate::harness::HarnessError;
use crate::rewards::TaskId;
use crate::scheduler::{sequence_layout, Scheduler};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";
pub const CONFIG_FILE: &str = "config.toml";
pub const SCHEDULER_FILE: &str = "scheduler.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const FINAL_CHECKPOINT: &str = "final.wknn";

/// One line of the metrics stream. Wall-clock time is kept out of it, in
/// the timing file, so identical runs give identical streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: u64,
    /// Acting task of each sequence.
    pub schedule: Vec<TaskId>,
    /// Accumulated intention reward of each sequence.
    pub sequence_returns: Vec<f64>,
    /// Whole-episode return of every task, in task-set order.
    pub task_returns: Vec<f64>,
    pub main_return: f64,
    pub first_sequence: Option<SequenceSummary>,
    /// First-sequence behaviour met the task threshold in this episode.
    pub success: bool,
    pub steps: usize,
    pub truncated: Option<String>,
    pub random_actions: bool,
    pub learner: LearnStats,
    pub replay_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Timing {
    episode: u64,
    episode_seconds: f64,
    learner_seconds: f64,
}

struct Output {
    dir: PathBuf,
    metrics: BufWriter<File>,
    timing: BufWriter<File>,
}

impl Output {
    fn create(dir: &Path, cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        std::fs::create_dir_all(dir.join("checkpoints"))?;
        std::fs::write(dir.join(CONFIG_FILE), cfg.to_toml_string())?;
        if cfg.trajectory_every > 0 {
            std::fs::create_dir_all(dir.join("trajectories"))?;
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            metrics: BufWriter::new(File::create(dir.join(METRICS_FILE))?),
            timing: BufWriter::new(File::create(dir.join(TIMING_FILE))?),
        })
    }
}

/// Independent random streams derived from the experiment seed.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub struct Trainer {
    pub cfg: ExperimentConfig,
    pub env: Env,
    pub agent: Sac<f32>,
    pub replay: ReplayBuffer,
    pub scheduler: Scheduler,
    pub criteria: SuccessCriteria,
    /// First-sequence summaries of every episode so far.
    pub summaries: Vec<SequenceSummary>,
    durations: Vec<usize>,
    episode: u64,
    actor_rng: ChaCha8Rng,
    learner_rng: ChaCha8Rng,
    scheduler_rng: ChaCha8Rng,
    output: Option<Output>,
}

impl Trainer {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let env = Env::new(&cfg)?;
        let tasks = env.tasks.len();
        let (low, high) = env.action_bounds();
        let (offset, scale) = env.input_scaling();
        let mut init_rng = stream(cfg.seed, 0);
        let agent = Sac::new(env.obs_dim(), low, high, tasks, cfg.agent.clone(), &offset, &scale, &mut init_rng)?;
        let replay = ReplayBuffer::new(env.obs_dim(), env.action_dim(), tasks, cfg.agent.replay_capacity)?;
        let scheduler = Scheduler::new(cfg.scheduler, tasks, cfg.scheduler_q)?;
        let durations = sequence_layout(cfg.episode_steps, cfg.sequences)?;
        let output = match cfg.output_dir() {
            Some(dir) => Some(Output::create(&dir, &cfg)?),
            None => None,
        };
        Ok(Self {
            actor_rng: stream(cfg.seed, 1),
            learner_rng: stream(cfg.seed, 2),
            scheduler_rng: stream(cfg.seed, 3),
            cfg,
            env,
            agent,
            replay,
            scheduler,
            criteria: SuccessCriteria::default(),
            summaries: Vec::new(),
            durations,
            episode: 0,
            output,
        })
    }

    /// Episodes completed so far.
    pub fn episodes_done(&self) -> u64 {
        self.episode
    }

    pub fn output_dir(&self) -> Option<&Path> {
        self.output.as_ref().map(|o| o.dir.as_path())
    }

    /// Runs one episode, stores its transitions, then runs the learner.
    /// Returns the full log alongside its metrics record.
    pub fn step_with_log(&mut self) -> Result<(EpisodeMetrics, EpisodeLog), HarnessError> {
        self.episode += 1;
        let id = self.episode;
        let schedule = self.scheduler.plan(&self.durations, &mut self.scheduler_rng)?;
        let random_actions = (id as usize) <= self.cfg.random_episodes;
        let start = Instant::now();
        let (log, transitions) = if random_actions {
            let (low, high) = self.env.action_bounds();
            let c = UniformRandom { low, high };
            run_episode(&mut self.env, &c as &dyn Controller, &schedule, id, &mut self.actor_rng)?
        } else {
            run_episode(&mut self.env, &self.agent as &dyn Controller, &schedule, id, &mut self.actor_rng)?
        };
        let episode_seconds = start.elapsed().as_secs_f64();
        self.replay.extend(&transitions)?;

        let start = Instant::now();
        let learner = if self.replay.is_empty() {
            LearnStats::default()
        } else {
            self.agent.learn(&self.replay, self.cfg.agent.learner_steps_per_episode, &mut self.learner_rng)?
        };
        let learner_seconds = start.elapsed().as_secs_f64();

        let task_returns: Vec<f64> = (0..self.env.tasks.len()).map(|t| log.task_return(t)).collect();
        let main_return = task_returns[self.cfg.main_index()];
        self.scheduler.update(&schedule, main_return)?;

        let first_sequence = SequenceSummary::from_log(&log);
        let success = first_sequence.as_ref().is_some_and(|s| s.success(&self.criteria));
        if let Some(s) = &first_sequence {
            self.summaries.push(s.clone());
        }
        let metrics = EpisodeMetrics {
            episode: id,
            schedule: schedule.tasks.iter().map(|&t| self.env.tasks[t]).collect(),
            sequence_returns: log.sequence_returns.clone(),
            task_returns,
            main_return,
            first_sequence,
            success,
            steps: log.steps.len(),
            truncated: log.truncated.clone(),
            random_actions,
            learner,
            replay_size: self.replay.len(),
        };
        self.write_outputs(&metrics, &log, Timing { episode: id, episode_seconds, learner_seconds })?;
        Ok((metrics, log))
    }

    pub fn step(&mut self) -> Result<EpisodeMetrics, HarnessError> {
        Ok(self.step_with_log()?.0)
    }

    fn write_outputs(&mut self, m: &EpisodeMetrics, log: &EpisodeLog, timing: Timing) -> Result<(), HarnessError> {
        let Some(out) = self.output.as_mut() else { return Ok(()) };
        serde_json::to_writer(&mut out.metrics, m)?;
        out.metrics.write_all(b"\n")?;
        out.metrics.flush()?;
        serde_json::to_writer(&mut out.timing, &timing)?;
        out.timing.write_all(b"\n")?;
        out.timing.flush()?;
        let every = self.cfg.checkpoint_every as u64;
        if every > 0 && m.episode % every == 0 {
            self.agent.save(out.dir.join("checkpoints").join(format!("episode_{:06}.wknn", m.episode)))?;
            std::fs::write(out.dir.join(SCHEDULER_FILE), serde_json::to_vec_pretty(&self.scheduler)?)?;
        }
        let every = self.cfg.trajectory_every as u64;
        if every > 0 && (m.episode % every == 0 || m.episode == 1) {
            log.save(out.dir.join("trajectories").join(format!("episode_{:06}.json", m.episode)))?;
        }
        Ok(())
    }

    /// Current evaluation of every task that has acted first in an episode.
    pub fn evaluation(&self) -> Result<Vec<TaskEvaluation>, HarnessError> {
        evaluate(&self.summaries, &self.criteria)
    }

    /// Final checkpoint, scheduler state and evaluation summary.
    pub fn finish(&mut self) -> Result<Vec<TaskEvaluation>, HarnessError> {
        let evaluation = if self.summaries.is_empty() { Vec::new() } else { self.evaluation()? };
        if let Some(out) = &self.output {
            self.agent.save(out.dir.join("checkpoints").join(FINAL_CHECKPOINT))?;
            std::fs::write(out.dir.join(SCHEDULER_FILE), serde_json::to_vec_pretty(&self.scheduler)?)?;
            std::fs::write(out.dir.join(SUMMARY_FILE), serde_json::to_vec_pretty(&evaluation)?)?;
        }
        Ok(evaluation)
    }
}

pub struct TrainOutcome {
    pub metrics: Vec<EpisodeMetrics>,
    pub evaluation: Vec<TaskEvaluation>,
    pub agent: Sac<f32>,
}

/// Runs `cfg.episodes` episodes.
pub fn train(cfg: ExperimentConfig) -> Result<TrainOutcome, HarnessError> {
    let mut trainer = Trainer::new(cfg)?;
    let mut metrics = Vec::with_capacity(trainer.cfg.episodes);
    for _ in 0..trainer.cfg.episodes {
        metrics.push(trainer.step()?);
    }
    let evaluation = trainer.finish()?;
    Ok(TrainOutcome { metrics, evaluation, agent: trainer.agent })
}
