//! Critic, learner updates and checkpoints of the multi-task agent.

use crate::agent::policy::{GaussianPolicy, PolicySample};
use crate::agent::replay::{Batch, ReplayBuffer};
use crate::agent::tower::{Tower, TowerAdam, TowerGrads, TowerShape};
use crate::agent::{AgentError, Hyperparams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use walker_nn::{Checkpoint, Mat, Scalar};

/// Something that scores actions and reports `∂Q/∂a`; the critic is one,
/// tests plug in closed-form functions.
pub trait ActionValue<T: Scalar> {
    /// Per-row values and action gradients for the given task.
    fn value_and_action_grad(&self, obs: &Mat<T>, action: &Mat<T>, task: usize) -> Result<(Vec<T>, Mat<T>), AgentError>;
}

/// Q-network over observation ⊕ action, with its target copy.
#[derive(Debug, Clone)]
pub struct Critic<T: Scalar> {
    pub net: Tower<T>,
    pub target: Tower<T>,
    obs_dim: usize,
}

impl<T: Scalar> Critic<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        num_tasks: usize,
        shape: &TowerShape,
        in_offset: &[f64],
        in_scale: &[f64],
        rng: &mut R,
    ) -> Result<Self, AgentError> {
        let net = Tower::new(obs_dim + action_dim, shape, 1, false, num_tasks, in_offset, in_scale, rng)?;
        let target = net.clone();
        Ok(Self { net, target, obs_dim })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn q_values(&self, obs: &Mat<T>, action: &Mat<T>, task: usize) -> Result<Vec<T>, AgentError> {
        Ok(self.net.infer(&obs.hcat(action), &[task])?.remove(0).data)
    }

    pub fn target_q_values(&self, obs: &Mat<T>, action: &Mat<T>, task: usize) -> Result<Vec<T>, AgentError> {
        Ok(self.target.infer(&obs.hcat(action), &[task])?.remove(0).data)
    }

    pub fn sync_target(&mut self) {
        self.target.copy_params_from(&self.net);
    }
}

impl<T: Scalar> ActionValue<T> for Critic<T> {
    fn value_and_action_grad(&self, obs: &Mat<T>, action: &Mat<T>, task: usize) -> Result<(Vec<T>, Mat<T>), AgentError> {
        if task >= self.net.num_heads() {
            return Err(AgentError::UnknownTask(task));
        }
        let (mut outs, tape) = self.net.forward(&obs.hcat(action), &[task])?;
        let ones = Mat::from_vec(obs.rows, 1, vec![T::one(); obs.rows]);
        let dx = self.net.backward(&tape, &[ones], None)?;
        Ok((outs.remove(0).data, dx.columns(self.obs_dim, action.cols)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LearnStats {
    pub steps: usize,
    /// Mean critic loss over the applied updates.
    pub critic_loss: f64,
    /// Mean policy objective over the applied updates.
    pub policy_objective: f64,
    /// Updates skipped because of non-finite values.
    pub skipped: usize,
}

/// Everything needed to rebuild an agent from a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AgentMeta {
    hp: Hyperparams,
    obs_dim: usize,
    low: Vec<f64>,
    high: Vec<f64>,
    num_tasks: usize,
    in_offset: Vec<f64>,
    in_scale: Vec<f64>,
    learner_steps: u64,
}

#[derive(Debug, Clone)]
pub struct Sac<T: Scalar> {
    pub hp: Hyperparams,
    pub policy: GaussianPolicy<T>,
    pub critic: Critic<T>,
    policy_opt: TowerAdam<T>,
    critic_opt: TowerAdam<T>,
    pub learner_steps: u64,
    in_offset: Vec<f64>,
    in_scale: Vec<f64>,
}

fn mean<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.to_f64().unwrap()).sum::<f64>() / v.len().max(1) as f64
}

impl<T: Scalar> Sac<T> {
    /// `in_offset`/`in_scale` define a fixed affine map on the leading
    /// observation entries, applied inside both networks.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        low: Vec<f64>,
        high: Vec<f64>,
        num_tasks: usize,
        hp: Hyperparams,
        in_offset: &[f64],
        in_scale: &[f64],
        rng: &mut R,
    ) -> Result<Self, AgentError> {
        hp.validate()?;
        if num_tasks == 0 {
            return Err(AgentError::Config("at least one task is required".into()));
        }
        let action_dim = low.len();
        let policy = GaussianPolicy::new(obs_dim, low, high, num_tasks, &hp.policy_shape, in_offset, in_scale, rng)?;
        let critic = Critic::new(obs_dim, action_dim, num_tasks, &hp.critic_shape, in_offset, in_scale, rng)?;
        let policy_opt = TowerAdam::new(&policy.tower, hp.lr);
        let critic_opt = TowerAdam::new(&critic.net, hp.lr);
        Ok(Self {
            hp,
            policy,
            critic,
            policy_opt,
            critic_opt,
            learner_steps: 0,
            in_offset: in_offset.to_vec(),
            in_scale: in_scale.to_vec(),
        })
    }

    /// Changes the step size of both optimizers, keeping their moments.
    pub fn set_learning_rate(&mut self, lr: f64) {
        self.hp.lr = lr;
        self.policy_opt.set_lr(lr);
        self.critic_opt.set_lr(lr);
    }

    pub fn num_tasks(&self) -> usize {
        self.policy.tower.num_heads()
    }

    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], task: usize, rng: &mut R) -> Result<PolicySample, AgentError> {
        self.policy.sample(obs, task, rng)
    }

    /// TD targets `r_T + γ(Q̄_T(s', a'_T) − α log π(a'_T|s', T))`, one column per task.
    pub fn critic_targets<R: Rng + ?Sized>(&self, batch: &Batch<T>, rng: &mut R) -> Result<Mat<T>, AgentError> {
        let k = self.num_tasks();
        if batch.rewards.cols != k {
            return Err(AgentError::Dimension { expected: k, got: batch.rewards.cols });
        }
        let heads: Vec<usize> = (0..k).collect();
        let us = self.policy.tower.infer(&batch.next_obs, &heads)?;
        let (gamma, alpha) = (T::lit(self.hp.gamma), T::lit(self.hp.alpha));
        let mut y = Mat::zeros(batch.len(), k);
        for (t, u) in us.iter().enumerate() {
            let s = self.policy.sample_batch(u, rng);
            let q = self.critic.target_q_values(&batch.next_obs, &s.action, t)?;
            for r in 0..batch.len() {
                y.set(r, t, batch.rewards.get(r, t) + gamma * (q[r] - alpha * s.log_prob[r]));
            }
        }
        Ok(y)
    }

    /// Loss `Σ_T mean_b (Q_T − y_T)²` and its parameter gradient.
    pub fn critic_gradients<R: Rng + ?Sized>(&self, batch: &Batch<T>, rng: &mut R) -> Result<(f64, TowerGrads<T>), AgentError> {
        let y = self.critic_targets(batch, rng)?;
        let k = self.num_tasks();
        let n = batch.len();
        let heads: Vec<usize> = (0..k).collect();
        let (outs, tape) = self.critic.net.forward(&batch.obs.hcat(&batch.action), &heads)?;
        let scale = T::lit(2.0 / n as f64);
        let mut loss = 0.0;
        let mut douts = Vec::with_capacity(k);
        for (t, q) in outs.iter().enumerate() {
            let mut d = Mat::zeros(n, 1);
            for r in 0..n {
                let e = q.data[r] - y.get(r, t);
                loss += e.to_f64().unwrap().powi(2) / n as f64;
                d.data[r] = scale * e;
            }
            douts.push(d);
        }
        if !loss.is_finite() {
            return Err(AgentError::NonFinite("critic loss"));
        }
        let mut grads = self.critic.net.zero_grads();
        self.critic.net.backward(&tape, &douts, Some(&mut grads))?;
        Ok((loss, grads))
    }

    /// One Adam step on the critic; returns the loss before the step.
    pub fn critic_update<R: Rng + ?Sized>(&mut self, batch: &Batch<T>, rng: &mut R) -> Result<f64, AgentError> {
        let (loss, grads) = self.critic_gradients(batch, rng)?;
        self.critic_opt.step(&mut self.critic.net, &grads)?;
        Ok(loss)
    }

    /// Objective `Σ_T mean_b [Q_T(s, a_θ) − α log π_θ(a_θ|s, T)]` with
    /// reparameterized actions, and the gradient of its negation.
    pub fn policy_gradients<Q: ActionValue<T> + ?Sized, R: Rng + ?Sized>(
        &self,
        q: &Q,
        obs: &Mat<T>,
        rng: &mut R,
    ) -> Result<(f64, TowerGrads<T>), AgentError> {
        let k = self.num_tasks();
        let n = obs.rows;
        let heads: Vec<usize> = (0..k).collect();
        let (us, tape) = self.policy.forward(obs, &heads)?;
        let alpha = T::lit(self.hp.alpha);
        let weight = T::lit(-1.0 / n as f64);
        let mut objective = 0.0;
        let mut douts = Vec::with_capacity(k);
        for (t, u) in us.iter().enumerate() {
            let s = self.policy.sample_batch(u, rng);
            let (vals, dq_da) = q.value_and_action_grad(obs, &s.action, t)?;
            let per_row: Vec<T> = vals.iter().zip(&s.log_prob).map(|(&v, &lp)| v - alpha * lp).collect();
            objective += mean(&per_row);
            douts.push(self.policy.head_output_grad(&s, &dq_da, self.hp.alpha, weight));
        }
        if !objective.is_finite() {
            return Err(AgentError::NonFinite("policy objective"));
        }
        let mut grads = self.policy.tower.zero_grads();
        self.policy.backward(&tape, &douts, &mut grads)?;
        Ok((objective, grads))
    }

    /// One ascent step on the policy against an arbitrary action-value.
    pub fn policy_update_with<Q: ActionValue<T> + ?Sized, R: Rng + ?Sized>(
        &mut self,
        q: &Q,
        obs: &Mat<T>,
        rng: &mut R,
    ) -> Result<f64, AgentError> {
        let (objective, grads) = self.policy_gradients(q, obs, rng)?;
        self.policy_opt.step(&mut self.policy.tower, &grads)?;
        Ok(objective)
    }

    /// One ascent step on the policy against the learned critic.
    pub fn policy_update<R: Rng + ?Sized>(&mut self, batch: &Batch<T>, rng: &mut R) -> Result<f64, AgentError> {
        let (objective, grads) = self.policy_gradients(&self.critic, &batch.obs, rng)?;
        self.policy_opt.step(&mut self.policy.tower, &grads)?;
        Ok(objective)
    }

    /// `steps` learner iterations, each a critic and a policy update on one
    /// uniformly drawn batch. Non-finite updates are skipped and counted.
    pub fn learn<R: Rng + ?Sized>(&mut self, replay: &ReplayBuffer, steps: usize, rng: &mut R) -> Result<LearnStats, AgentError> {
        let mut stats = LearnStats::default();
        let mut applied = 0usize;
        for _ in 0..steps {
            let batch: Batch<T> = replay.sample(self.hp.batch_size, rng)?;
            let critic = self.critic_update(&batch, rng);
            let policy = self.policy_update(&batch, rng);
            match (critic, policy) {
                (Ok(c), Ok(p)) => {
                    stats.critic_loss += c;
                    stats.policy_objective += p;
                    applied += 1;
                }
                (Err(AgentError::NonFinite(_)), _) | (_, Err(AgentError::NonFinite(_))) => stats.skipped += 1,
                (Err(e), _) | (_, Err(e)) => return Err(e),
            }
            self.learner_steps += 1;
            stats.steps += 1;
            if self.learner_steps % self.hp.target_period as u64 == 0 {
                self.critic.sync_target();
            }
        }
        if applied > 0 {
            stats.critic_loss /= applied as f64;
            stats.policy_objective /= applied as f64;
        }
        Ok(stats)
    }

    fn meta(&self) -> AgentMeta {
        AgentMeta {
            hp: self.hp.clone(),
            obs_dim: self.policy.obs_dim(),
            low: self.policy.low.clone(),
            high: self.policy.high.clone(),
            num_tasks: self.num_tasks(),
            in_offset: self.in_offset.clone(),
            in_scale: self.in_scale.clone(),
            learner_steps: self.learner_steps,
        }
    }

    /// Network parameters and configuration; optimizer moments are not kept.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.put_bytes("agent.meta", serde_json::to_string(&self.meta()).expect("serializable").as_bytes());
        self.policy.tower.save(&mut ck, "policy");
        self.critic.net.save(&mut ck, "critic");
        self.critic.target.save(&mut ck, "critic_target");
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, AgentError> {
        let meta: AgentMeta = serde_json::from_slice(ck.get_bytes("agent.meta")?)
            .map_err(|e| AgentError::Config(format!("checkpoint metadata: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut sac =
            Self::new(meta.obs_dim, meta.low, meta.high, meta.num_tasks, meta.hp, &meta.in_offset, &meta.in_scale, &mut rng)?;
        sac.policy.tower.load(ck, "policy")?;
        sac.critic.net.load(ck, "critic")?;
        sac.critic.target.load(ck, "critic_target")?;
        sac.learner_steps = meta.learner_steps;
        Ok(sac)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), AgentError> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AgentError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
