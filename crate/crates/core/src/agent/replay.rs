//! Shared FIFO replay buffer. Storage is `f32` and grows lazily up to the
//! capacity, after which the oldest transitions are overwritten.

use crate::agent::AgentError;
use rand::Rng;
use walker_nn::{Mat, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    /// One reward per task head.
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
    /// Task whose head generated the action.
    pub task: usize,
    pub log_prob: f64,
    pub episode: u32,
    pub step: u32,
}

/// A uniformly drawn minibatch, one transition per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub obs: Mat<T>,
    pub action: Mat<T>,
    /// `rows × tasks`.
    pub rewards: Mat<T>,
    pub next_obs: Mat<T>,
    pub task: Vec<usize>,
}

impl<T: Scalar> Batch<T> {
    pub fn len(&self) -> usize {
        self.obs.rows
    }

    pub fn is_empty(&self) -> bool {
        self.obs.rows == 0
    }

    pub fn from_transitions(items: &[Transition]) -> Self {
        let lit = |v: &[f64]| v.iter().map(|&x| T::lit(x)).collect::<Vec<_>>();
        Self {
            obs: Mat::from_rows(&items.iter().map(|t| lit(&t.obs)).collect::<Vec<_>>()),
            action: Mat::from_rows(&items.iter().map(|t| lit(&t.action)).collect::<Vec<_>>()),
            rewards: Mat::from_rows(&items.iter().map(|t| lit(&t.rewards)).collect::<Vec<_>>()),
            next_obs: Mat::from_rows(&items.iter().map(|t| lit(&t.next_obs)).collect::<Vec<_>>()),
            task: items.iter().map(|t| t.task).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    obs_dim: usize,
    action_dim: usize,
    num_tasks: usize,
    capacity: usize,
    /// Index of the slot the next transition overwrites once full.
    head: usize,
    len: usize,
    obs: Vec<f32>,
    action: Vec<f32>,
    rewards: Vec<f32>,
    next_obs: Vec<f32>,
    task: Vec<u16>,
    log_prob: Vec<f32>,
    ids: Vec<(u32, u32)>,
}

impl ReplayBuffer {
    pub fn new(obs_dim: usize, action_dim: usize, num_tasks: usize, capacity: usize) -> Result<Self, AgentError> {
        if capacity == 0 || num_tasks == 0 || num_tasks > u16::MAX as usize {
            return Err(AgentError::Config("replay needs positive capacity and 1..=65535 tasks".into()));
        }
        Ok(Self {
            obs_dim,
            action_dim,
            num_tasks,
            capacity,
            head: 0,
            len: 0,
            obs: Vec::new(),
            action: Vec::new(),
            rewards: Vec::new(),
            next_obs: Vec::new(),
            task: Vec::new(),
            log_prob: Vec::new(),
            ids: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    fn check(&self, t: &Transition) -> Result<(), AgentError> {
        let dims = [
            (self.obs_dim, t.obs.len()),
            (self.obs_dim, t.next_obs.len()),
            (self.action_dim, t.action.len()),
            (self.num_tasks, t.rewards.len()),
        ];
        for (expected, got) in dims {
            if expected != got {
                return Err(AgentError::Dimension { expected, got });
            }
        }
        if t.task >= self.num_tasks {
            return Err(AgentError::UnknownTask(t.task));
        }
        Ok(())
    }

    pub fn push(&mut self, t: &Transition) -> Result<(), AgentError> {
        self.check(t)?;
        let f = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
        if self.len < self.capacity {
            self.obs.extend(f(&t.obs));
            self.action.extend(f(&t.action));
            self.rewards.extend(f(&t.rewards));
            self.next_obs.extend(f(&t.next_obs));
            self.task.push(t.task as u16);
            self.log_prob.push(t.log_prob as f32);
            self.ids.push((t.episode, t.step));
            self.len += 1;
        } else {
            let i = self.head;
            let (o, a, k) = (self.obs_dim, self.action_dim, self.num_tasks);
            self.obs[i * o..(i + 1) * o].copy_from_slice(&f(&t.obs));
            self.action[i * a..(i + 1) * a].copy_from_slice(&f(&t.action));
            self.rewards[i * k..(i + 1) * k].copy_from_slice(&f(&t.rewards));
            self.next_obs[i * o..(i + 1) * o].copy_from_slice(&f(&t.next_obs));
            self.task[i] = t.task as u16;
            self.log_prob[i] = t.log_prob as f32;
            self.ids[i] = (t.episode, t.step);
            self.head = (self.head + 1) % self.capacity;
        }
        Ok(())
    }

    /// Appends a whole trajectory; nothing is stored if any step is malformed.
    pub fn extend(&mut self, steps: &[Transition]) -> Result<(), AgentError> {
        for t in steps {
            self.check(t)?;
        }
        steps.iter().try_for_each(|t| self.push(t))
    }

    /// Stored transition at logical position `i`, 0 being the oldest.
    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len {
            return None;
        }
        let slot = if self.len < self.capacity { i } else { (self.head + i) % self.capacity };
        let g = |v: &[f32], w: usize| v[slot * w..(slot + 1) * w].iter().map(|&x| x as f64).collect();
        Some(Transition {
            obs: g(&self.obs, self.obs_dim),
            action: g(&self.action, self.action_dim),
            rewards: g(&self.rewards, self.num_tasks),
            next_obs: g(&self.next_obs, self.obs_dim),
            task: self.task[slot] as usize,
            log_prob: self.log_prob[slot] as f64,
            episode: self.ids[slot].0,
            step: self.ids[slot].1,
        })
    }

    /// Uniform sample with replacement.
    pub fn sample<T: Scalar, R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch<T>, AgentError> {
        if self.len == 0 {
            return Err(AgentError::EmptyReplay);
        }
        let (o, a, k) = (self.obs_dim, self.action_dim, self.num_tasks);
        let mut obs = Vec::with_capacity(n * o);
        let mut action = Vec::with_capacity(n * a);
        let mut rewards = Vec::with_capacity(n * k);
        let mut next_obs = Vec::with_capacity(n * o);
        let mut task = Vec::with_capacity(n);
        let cast = |v: &[f32]| v.iter().map(|&x| T::from_f32(x).unwrap()).collect::<Vec<T>>();
        for _ in 0..n {
            let s = rng.random_range(0..self.len);
            obs.extend(cast(&self.obs[s * o..(s + 1) * o]));
            action.extend(cast(&self.action[s * a..(s + 1) * a]));
            rewards.extend(cast(&self.rewards[s * k..(s + 1) * k]));
            next_obs.extend(cast(&self.next_obs[s * o..(s + 1) * o]));
            task.push(self.task[s] as usize);
        }
        Ok(Batch {
            obs: Mat::from_vec(n, o, obs),
            action: Mat::from_vec(n, a, action),
            rewards: Mat::from_vec(n, k, rewards),
            next_obs: Mat::from_vec(n, o, next_obs),
            task,
        })
    }
}
