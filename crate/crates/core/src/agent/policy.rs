//! Task-conditioned Gaussian policy.

use crate::agent::tower::{Tower, TowerGrads, TowerShape, TowerTape};
use crate::agent::AgentError;
use rand::Rng;
use rand_distr::StandardNormal;
use walker_nn::{Mat, Scalar};

pub const MIN_STD: f64 = 0.3;
pub const MAX_STD: f64 = 1.0;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Gaussian scale for a tanh output `u ∈ [-1, 1]`.
pub fn std_from_tanh(u: f64) -> f64 {
    MIN_STD + 0.5 * (MAX_STD - MIN_STD) * (u + 1.0)
}

/// Log density of `N(mean, std²)` per dimension, summed.
pub fn gaussian_log_prob(x: &[f64], mean: &[f64], std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(std)
        .map(|((&x, &m), &s)| {
            let e = (x - m) / s;
            -0.5 * e * e - s.ln() - LN_SQRT_2PI
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    /// Action clamped into the bounds.
    pub action: Vec<f64>,
    pub pre_clamp: Vec<f64>,
    /// Log density of `pre_clamp`.
    pub log_prob: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Reparameterized batch of actions for one head.
pub struct BatchSample<T> {
    pub eps: Mat<T>,
    pub std: Mat<T>,
    pub pre_clamp: Mat<T>,
    pub action: Mat<T>,
    /// Per-row log density of `pre_clamp`.
    pub log_prob: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct GaussianPolicy<T: Scalar> {
    pub tower: Tower<T>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl<T: Scalar> GaussianPolicy<T> {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        low: Vec<f64>,
        high: Vec<f64>,
        num_tasks: usize,
        shape: &TowerShape,
        in_offset: &[f64],
        in_scale: &[f64],
        rng: &mut R,
    ) -> Result<Self, AgentError> {
        if low.len() != high.len() || low.iter().zip(&high).any(|(l, h)| !(l < h)) {
            return Err(AgentError::Config("action bounds must satisfy low < high".into()));
        }
        let tower = Tower::new(obs_dim, shape, 2 * low.len(), true, num_tasks, in_offset, in_scale, rng)?;
        Ok(Self { tower, low, high })
    }

    pub fn action_dim(&self) -> usize {
        self.low.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.tower.input_dim()
    }

    fn half(&self, k: usize) -> f64 {
        0.5 * (self.high[k] - self.low[k])
    }

    fn mid(&self, k: usize) -> f64 {
        0.5 * (self.high[k] + self.low[k])
    }

    /// Mean and scale from one row of head output.
    pub fn distribution(&self, u: &[T]) -> (Vec<f64>, Vec<f64>) {
        let a = self.action_dim();
        let mean = (0..a).map(|k| self.mid(k) + self.half(k) * u[k].to_f64().unwrap()).collect();
        let std = (0..a).map(|k| std_from_tanh(u[a + k].to_f64().unwrap())).collect();
        (mean, std)
    }

    fn check_task(&self, task: usize) -> Result<(), AgentError> {
        if task >= self.tower.num_heads() {
            return Err(AgentError::UnknownTask(task));
        }
        Ok(())
    }

    fn head_output(&self, obs: &[f64], task: usize) -> Result<Vec<T>, AgentError> {
        self.check_task(task)?;
        if obs.len() != self.obs_dim() {
            return Err(AgentError::Dimension { expected: self.obs_dim(), got: obs.len() });
        }
        let x = Mat::row_vector(&obs.iter().map(|&v| T::lit(v)).collect::<Vec<_>>());
        Ok(self.tower.infer(&x, &[task])?.remove(0).data)
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], task: usize, rng: &mut R) -> Result<PolicySample, AgentError> {
        let u = self.head_output(obs, task)?;
        let (mean, std) = self.distribution(&u);
        let pre: Vec<f64> = mean.iter().zip(&std).map(|(&m, &s)| m + s * rng.sample::<f64, _>(StandardNormal)).collect();
        let action = pre.iter().enumerate().map(|(k, &v)| v.clamp(self.low[k], self.high[k])).collect();
        let log_prob = gaussian_log_prob(&pre, &mean, &std);
        Ok(PolicySample { action, pre_clamp: pre, log_prob, mean, std })
    }

    /// Mean action (clamped), for evaluation runs.
    pub fn mean_action(&self, obs: &[f64], task: usize) -> Result<Vec<f64>, AgentError> {
        let u = self.head_output(obs, task)?;
        Ok(self.distribution(&u).0)
    }

    /// Draws one reparameterized action per row of `u` (head output).
    pub fn sample_batch<R: Rng + ?Sized>(&self, u: &Mat<T>, rng: &mut R) -> BatchSample<T> {
        let a = self.action_dim();
        let n = u.rows;
        let mut eps = Mat::zeros(n, a);
        let mut std = Mat::zeros(n, a);
        let mut pre = Mat::zeros(n, a);
        let mut action = Mat::zeros(n, a);
        let mut log_prob = vec![T::zero(); n];
        let (min_std, slope) = (T::lit(MIN_STD), T::lit(0.5 * (MAX_STD - MIN_STD)));
        let half_log = T::lit(LN_SQRT_2PI);
        let half = T::lit(0.5);
        for r in 0..n {
            let row = u.row(r);
            let mut lp = T::zero();
            for k in 0..a {
                let e = T::lit(rng.sample::<f64, _>(StandardNormal));
                let s = min_std + slope * (row[a + k] + T::one());
                let m = T::lit(self.mid(k)) + T::lit(self.half(k)) * row[k];
                let p = m + s * e;
                eps.set(r, k, e);
                std.set(r, k, s);
                pre.set(r, k, p);
                action.set(r, k, p.max(T::lit(self.low[k])).min(T::lit(self.high[k])));
                lp = lp - half * e * e - s.ln() - half_log;
            }
            log_prob[r] = lp;
        }
        BatchSample { eps, std, pre_clamp: pre, action, log_prob }
    }

    /// Head-output gradient of `Σ_rows w_r · [g_Q·a − α·log π]` given the
    /// action gradient `dq_da` of the objective. Clamped components pass no
    /// action gradient.
    pub fn head_output_grad(&self, sample: &BatchSample<T>, dq_da: &Mat<T>, alpha: f64, weight: T) -> Mat<T> {
        let a = self.action_dim();
        let n = sample.eps.rows;
        let mut du = Mat::zeros(n, 2 * a);
        let slope = T::lit(0.5 * (MAX_STD - MIN_STD));
        let alpha = T::lit(alpha);
        for r in 0..n {
            for k in 0..a {
                let p = sample.pre_clamp.get(r, k);
                let inside = p >= T::lit(self.low[k]) && p <= T::lit(self.high[k]);
                let g = if inside { dq_da.get(r, k) } else { T::zero() };
                let s = sample.std.get(r, k);
                // d/dmean: g; d/dstd: g·ε + α/σ (from −α·log π with ε fixed).
                du.set(r, k, weight * g * T::lit(self.half(k)));
                du.set(r, a + k, weight * (g * sample.eps.get(r, k) + alpha / s) * slope);
            }
        }
        du
    }

    pub fn forward(&self, obs: &Mat<T>, heads: &[usize]) -> Result<(Vec<Mat<T>>, TowerTape<T>), AgentError> {
        for &h in heads {
            self.check_task(h)?;
        }
        self.tower.forward(obs, heads)
    }

    pub fn backward(&self, tape: &TowerTape<T>, douts: &[Mat<T>], grads: &mut TowerGrads<T>) -> Result<(), AgentError> {
        self.tower.backward(tape, douts, Some(grads))?;
        Ok(())
    }
}
