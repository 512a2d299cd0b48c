//! Learning side of the walker project: proprioceptive estimation, task
//! rewards, the multi-task soft actor-critic agent, intra-episode task
//! schedulers and the experiment harness.

pub mod agent;
pub mod proprio;
pub mod rewards;
pub mod scheduler;
pub mod harness;
