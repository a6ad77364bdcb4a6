use crate::error::{config, Result};
use crate::norm::{NormKind, NormSpec};
use crate::numcore::OptimizerKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Ddpg,
    Td3,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Ddpg => "ddpg",
            Algorithm::Td3 => "td3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ddpg" => Some(Algorithm::Ddpg),
            "td3" => Some(Algorithm::Td3),
            _ => None,
        }
    }

    pub fn critic_count(self) -> usize {
        match self {
            Algorithm::Ddpg => 1,
            Algorithm::Td3 => 2,
        }
    }
}

/// Everything that determines a training run, including its seed.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub use_target_networks: bool,
    pub norm: NormSpec,
    pub gamma: f64,
    pub expl_noise: f64,
    pub policy_noise: f64,
    pub noise_clip: f64,
    pub policy_delay: usize,
    pub warmup: usize,
    pub total_steps: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    /// The critic takes the action at its second layer instead of its
    /// input (the reference DDPG critic); TD3 critics take it at the input.
    pub late_action: bool,
    /// Size of an extra moment-only dual forward before each critic update;
    /// the update itself then normalizes with those moments held fixed.
    pub moment_batch: Option<usize>,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub buffer_capacity: usize,
}

/// Names accepted by [`AgentConfig::preset`].
pub const PRESETS: &[&str] = &[
    "ddpg",
    "ddpg-layernorm",
    "ddpg-batchnorm",
    "ddpg-no-targets",
    "ddpg-no-targets-layernorm",
    "ddpg-crossnorm",
    "td3",
    "td3-no-targets-layernorm",
    "td3-crossnorm",
    "td3-crossnorm-2048",
    "td3-crossrenorm",
];

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            algorithm: Algorithm::Ddpg,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            tau: 5e-3,
            batch_size: 100,
            optimizer: OptimizerKind::Adam,
            use_target_networks: true,
            norm: NormSpec::none(),
            gamma: 0.99,
            expl_noise: 0.1,
            policy_noise: 0.2,
            noise_clip: 0.5,
            policy_delay: 1,
            warmup: 1000,
            total_steps: 30_000,
            seed: 0,
            hidden: vec![64, 64],
            late_action: true,
            moment_batch: None,
            eval_interval: 1000,
            eval_episodes: 10,
            buffer_capacity: 100_000,
        }
    }
}

impl AgentConfig {
    /// Hyperparameter rows of the published configuration table, scaled to
    /// the pendulum (network width, step budget).
    pub fn preset(name: &str) -> Result<Self> {
        let ddpg = AgentConfig::default();
        let td3 = AgentConfig {
            algorithm: Algorithm::Td3,
            batch_size: 256,
            policy_delay: 2,
            late_action: false,
            ..AgentConfig::default()
        };
        let no_targets =
            |c: AgentConfig, lr: f64, opt: OptimizerKind, norm: NormSpec| AgentConfig {
                use_target_networks: false,
                actor_lr: lr,
                critic_lr: lr,
                optimizer: opt,
                norm,
                ..c
            };
        let cfg = match name {
            "ddpg" => ddpg,
            "ddpg-layernorm" => AgentConfig {
                norm: NormSpec::layer(),
                ..ddpg
            },
            "ddpg-batchnorm" => AgentConfig {
                norm: NormSpec::batch(),
                actor_lr: 1e-4,
                critic_lr: 1e-4,
                optimizer: OptimizerKind::RmsProp,
                ..ddpg
            },
            "ddpg-no-targets" => no_targets(ddpg, 1e-3, OptimizerKind::Adam, NormSpec::none()),
            "ddpg-no-targets-layernorm" => {
                no_targets(ddpg, 1e-3, OptimizerKind::Adam, NormSpec::layer())
            }
            "ddpg-crossnorm" => {
                no_targets(ddpg, 1e-4, OptimizerKind::RmsProp, NormSpec::cross(0.5))
            }
            "td3" => td3,
            "td3-no-targets-layernorm" => {
                no_targets(td3, 1e-3, OptimizerKind::Adam, NormSpec::layer())
            }
            "td3-crossnorm" => no_targets(td3, 1e-3, OptimizerKind::RmsProp, NormSpec::cross(0.5)),
            "td3-crossnorm-2048" => AgentConfig {
                moment_batch: Some(2048),
                ..no_targets(td3, 1e-3, OptimizerKind::RmsProp, NormSpec::cross(0.5))
            },
            "td3-crossrenorm" => no_targets(
                td3,
                1e-3,
                OptimizerKind::RmsProp,
                NormSpec::cross_renorm(0.99),
            ),
            other => {
                return config(format!(
                    "unknown preset '{}' (known: {})",
                    other,
                    PRESETS.join(", ")
                ))
            }
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.norm.validate()?;
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return config(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if self.use_target_networks && !(self.tau > 0.0 && self.tau <= 1.0) {
            return config(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if self.batch_size == 0 {
            return config("batch size must be at least 1");
        }
        if self.policy_delay == 0 {
            return config("policy delay must be at least 1");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return config("learning rates must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return config("hidden layer sizes must be positive and non-empty");
        }
        if self.expl_noise < 0.0 || self.policy_noise < 0.0 || self.noise_clip < 0.0 {
            return config("noise scales must be non-negative");
        }
        if self.eval_interval == 0 {
            return config("eval interval must be at least 1");
        }
        if self.buffer_capacity < self.batch_size {
            return config("buffer capacity is smaller than the batch size");
        }
        if matches!(self.moment_batch, Some(0)) {
            return config("moment batch must be positive");
        }
        Ok(())
    }

    /// Whether the critic consumes `(s, a)` and `(s', a')` in one stacked
    /// forward. Needed whenever the on-policy branch feeds the target or
    /// the normalization moments.
    pub fn dual_forward(&self) -> bool {
        !self.use_target_networks || self.norm.kind.is_cross()
    }

    /// Whether the critic normalizes its raw input.
    pub fn critic_input_norm(&self) -> bool {
        !matches!(self.norm.kind, NormKind::None | NormKind::Layer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossnorm_row() {
        let c = AgentConfig::preset("ddpg-crossnorm").unwrap();
        assert_eq!(c.actor_lr, 1e-4);
        assert_eq!(c.optimizer, OptimizerKind::RmsProp);
        assert_eq!(c.norm.alpha, 0.5);
        assert!(!c.use_target_networks);
        assert_eq!(c.batch_size, 100);
    }

    #[test]
    fn crossrenorm_row() {
        let c = AgentConfig::preset("td3-crossrenorm").unwrap();
        assert_eq!(c.algorithm, Algorithm::Td3);
        assert_eq!(c.batch_size, 256);
        assert_eq!(c.norm.kind, NormKind::CrossRenorm);
        assert_eq!(c.norm.alpha, 0.99);
        assert_eq!(c.norm.renorm_switch_step, 5000);
    }

    #[test]
    fn every_preset_validates() {
        for p in PRESETS {
            AgentConfig::preset(p).unwrap().validate().unwrap();
        }
        assert!(AgentConfig::preset("sac").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let mut c = AgentConfig::default();
        c.gamma = 0.0;
        assert!(c.validate().is_err());
        let mut c = AgentConfig::default();
        c.tau = 0.0;
        assert!(c.validate().is_err());
        c.use_target_networks = false;
        assert!(c.validate().is_ok());
    }
}
