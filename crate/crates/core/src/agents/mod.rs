//! DDPG and TD3 with switchable target networks and critic normalization.
//!
//! Without target networks the critic sees `(s, a)` and `(s', π(s'))` in a
//! single stacked forward pass. The successor half supplies the (detached)
//! bootstrap value and, for cross kinds, half of the normalization moments.

mod config;
mod nets;
mod train;

pub use config::{AgentConfig, Algorithm, PRESETS};
pub use nets::{
    actor_update, compute_critic_target, critic_update, next_actions, soft_update, soft_update_all,
    AgentNets, AgentOpts, CriticStep, TargetNets,
};
pub use train::{
    evaluate, log10_floored, policy_eval_fixed_buffer, probe_batch, probe_mean_abs_q, train, Agent,
    RunRecord, RunRow, DIVERGENCE_CHECK_INTERVAL, DIVERGENCE_THRESHOLD, LOG_FLOOR, PROBE_SIZE,
};
