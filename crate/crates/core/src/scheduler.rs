//! Intra-episode task scheduling: uniform (SAC-U) and a tabular
//! return-optimizing scheduler (SAC-Q).
//!
//! Tasks are referred to by their index in the agent's task list.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchedulerError {
    #[error("task list is empty")]
    NoTasks,
    #[error("episode of {steps} steps cannot be split into {sequences} equal sequences")]
    Layout { steps: usize, sequences: usize },
    #[error("main-task return must be finite, got {0}")]
    NonFiniteReturn(f64),
    #[error("temperatures must be positive")]
    Temperature,
    #[error("task index {task} out of range for {tasks} tasks")]
    TaskIndex { task: usize, tasks: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Uniform,
    Q,
}

impl std::str::FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "q" => Ok(Self::Q),
            _ => Err(format!("unknown scheduler `{s}` (expected uniform or q)")),
        }
    }
}

/// Which task acts for how many control steps, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub tasks: Vec<usize>,
    pub durations: Vec<usize>,
}

impl Schedule {
    pub fn total_steps(&self) -> usize {
        self.durations.iter().sum()
    }

    /// Scheduled task and sequence index at control step `step`.
    pub fn at(&self, step: usize) -> Option<(usize, usize)> {
        let mut end = 0;
        for (i, (&t, &d)) in self.tasks.iter().zip(&self.durations).enumerate() {
            end += d;
            if step < end {
                return Some((t, i));
            }
        }
        None
    }
}

/// Equal split of an episode into `sequences` parts.
pub fn sequence_layout(episode_steps: usize, sequences: usize) -> Result<Vec<usize>, SchedulerError> {
    if sequences == 0 || episode_steps % sequences != 0 {
        return Err(SchedulerError::Layout { steps: episode_steps, sequences });
    }
    Ok(vec![episode_steps / sequences; sequences])
}

pub fn next_task_uniform<R: Rng + ?Sized>(num_tasks: usize, rng: &mut R) -> Result<usize, SchedulerError> {
    if num_tasks == 0 {
        return Err(SchedulerError::NoTasks);
    }
    Ok(rng.random_range(0..num_tasks))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QConfig {
    pub temperature_start: f64,
    pub temperature_end: f64,
    /// Episodes over which the temperature falls linearly from start to end.
    pub anneal_episodes: u64,
    /// Normalized value given to candidates never tried from a node; visited
    /// candidates are normalized into `[0, 1]`.
    pub optimistic_value: f64,
}

impl Default for QConfig {
    fn default() -> Self {
        Self { temperature_start: 1.0, temperature_end: 0.1, anneal_episodes: 500, optimistic_value: 2.0 }
    }
}

/// Running mean of main-task returns observed after choosing a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Node {
    sequence: usize,
    prefix: Vec<usize>,
    candidates: Vec<Estimate>,
}

/// Tabular Monte-Carlo estimates keyed by (sequence index, tasks executed so far).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "QTableRepr", try_from = "QTableRepr")]
pub struct QTable {
    pub num_tasks: usize,
    pub config: QConfig,
    /// Completed updates.
    pub episodes: u64,
    nodes: BTreeMap<(usize, Vec<usize>), Vec<Estimate>>,
}

#[derive(Serialize, Deserialize)]
struct QTableRepr {
    num_tasks: usize,
    config: QConfig,
    episodes: u64,
    nodes: Vec<Node>,
}

impl From<QTable> for QTableRepr {
    fn from(t: QTable) -> Self {
        let nodes = t.nodes.into_iter().map(|((sequence, prefix), candidates)| Node { sequence, prefix, candidates }).collect();
        Self { num_tasks: t.num_tasks, config: t.config, episodes: t.episodes, nodes }
    }
}

impl TryFrom<QTableRepr> for QTable {
    type Error = SchedulerError;

    fn try_from(r: QTableRepr) -> Result<Self, Self::Error> {
        let mut nodes = BTreeMap::new();
        for n in r.nodes {
            if n.candidates.len() != r.num_tasks {
                return Err(SchedulerError::TaskIndex { task: n.candidates.len(), tasks: r.num_tasks });
            }
            nodes.insert((n.sequence, n.prefix), n.candidates);
        }
        Ok(Self { num_tasks: r.num_tasks, config: r.config, episodes: r.episodes, nodes })
    }
}

impl QTable {
    pub fn new(num_tasks: usize, config: QConfig) -> Result<Self, SchedulerError> {
        if num_tasks == 0 {
            return Err(SchedulerError::NoTasks);
        }
        if !(config.temperature_start > 0.0 && config.temperature_end > 0.0) {
            return Err(SchedulerError::Temperature);
        }
        Ok(Self { num_tasks, config, episodes: 0, nodes: BTreeMap::new() })
    }

    /// Current Boltzmann temperature.
    pub fn temperature(&self) -> f64 {
        let c = &self.config;
        let f = if c.anneal_episodes == 0 { 1.0 } else { (self.episodes as f64 / c.anneal_episodes as f64).min(1.0) };
        c.temperature_start + f * (c.temperature_end - c.temperature_start)
    }

    pub fn estimates(&self, sequence: usize, prefix: &[usize]) -> Option<&[Estimate]> {
        self.nodes.get(&(sequence, prefix.to_vec())).map(Vec::as_slice)
    }

    /// Selection distribution over candidates at a node.
    pub fn probabilities(&self, sequence: usize, prefix: &[usize], temperature: f64) -> Vec<f64> {
        let k = self.num_tasks;
        let est = self.estimates(sequence, prefix);
        let visited: Vec<f64> = est.map_or(Vec::new(), |e| e.iter().filter(|c| c.count > 0).map(|c| c.mean).collect());
        let lo = visited.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = visited.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let values: Vec<f64> = (0..k)
            .map(|i| match est.map(|e| e[i]) {
                Some(c) if c.count > 0 => {
                    if hi > lo {
                        (c.mean - lo) / (hi - lo)
                    } else {
                        1.0
                    }
                }
                _ => self.config.optimistic_value,
            })
            .collect();
        let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = values.iter().map(|v| ((v - top) / temperature).exp()).collect();
        let total: f64 = weights.iter().sum();
        weights.iter().map(|w| w / total).collect()
    }

    pub fn next_task<R: Rng + ?Sized>(&self, sequence: usize, prefix: &[usize], rng: &mut R) -> usize {
        let p = self.probabilities(sequence, prefix, self.temperature());
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return i;
            }
        }
        p.len() - 1
    }

    /// Running-average update of every node along the executed schedule.
    pub fn update(&mut self, executed: &[usize], main_return: f64) -> Result<(), SchedulerError> {
        if !main_return.is_finite() {
            return Err(SchedulerError::NonFiniteReturn(main_return));
        }
        if let Some(&task) = executed.iter().find(|&&t| t >= self.num_tasks) {
            return Err(SchedulerError::TaskIndex { task, tasks: self.num_tasks });
        }
        for (i, &task) in executed.iter().enumerate() {
            let node = self.nodes.entry((i, executed[..i].to_vec())).or_insert_with(|| vec![Estimate::default(); self.num_tasks]);
            let e = &mut node[task];
            e.count += 1;
            e.mean += (main_return - e.mean) / e.count as f64;
        }
        self.episodes += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Scheduler {
    Uniform { num_tasks: usize },
    Q(QTable),
}

impl Scheduler {
    pub fn new(kind: SchedulerKind, num_tasks: usize, config: QConfig) -> Result<Self, SchedulerError> {
        if num_tasks == 0 {
            return Err(SchedulerError::NoTasks);
        }
        Ok(match kind {
            SchedulerKind::Uniform => Self::Uniform { num_tasks },
            SchedulerKind::Q => Self::Q(QTable::new(num_tasks, config)?),
        })
    }

    /// Tasks for every sequence of the next episode.
    pub fn plan<R: Rng + ?Sized>(&self, durations: &[usize], rng: &mut R) -> Result<Schedule, SchedulerError> {
        let mut tasks = Vec::with_capacity(durations.len());
        for i in 0..durations.len() {
            let t = match self {
                Self::Uniform { num_tasks } => next_task_uniform(*num_tasks, rng)?,
                Self::Q(table) => table.next_task(i, &tasks, rng),
            };
            tasks.push(t);
        }
        Ok(Schedule { tasks, durations: durations.to_vec() })
    }

    /// Feeds back the main-task return of an executed episode (no-op for SAC-U).
    pub fn update(&mut self, executed: &Schedule, main_return: f64) -> Result<(), SchedulerError> {
        match self {
            Self::Uniform { .. } => Ok(()),
            Self::Q(table) => table.update(&executed.tasks, main_return),
        }
    }
}
