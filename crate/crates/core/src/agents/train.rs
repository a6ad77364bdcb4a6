use std::time::Instant;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::config::AgentConfig;
use super::nets::{actor_update, critic_update, soft_update_all, AgentNets, AgentOpts, CriticStep};
use crate::envs::{
    build_fixed_buffer, Batch, BufferPolicy, PendulumEnv, ReplayBuffer, Transition, ACT_DIM,
    OBS_DIM,
};
use crate::error::{Error, Result};
use crate::norm::{Layout, NormCtx, NormMode};
use crate::numcore::rng::{seeded, streams, Rng};
use crate::numcore::Mat;

/// Probe |Q| above which a run counts as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e8;
/// Transitions in the fixed probe batch.
pub const PROBE_SIZE: usize = 1024;
/// Updates between divergence checks on the probe batch.
pub const DIVERGENCE_CHECK_INTERVAL: usize = 100;
/// Reported in place of `log10(0)`.
pub const LOG_FLOOR: f64 = -16.0;

const PROBE_SALT: u64 = 0x5052_4f42_455f_5345;
const EVAL_SALT: u64 = 0x4556_414c_5f53_4545;

/// One logged interval of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunRow {
    pub step: usize,
    /// Mean return of the deterministic evaluation episodes; NaN for
    /// fixed-buffer runs, which never touch the environment.
    pub eval_return: f64,
    /// Mean critic loss over the updates since the previous row.
    pub critic_loss: f64,
    pub log10_mean_abs_q: f64,
    pub diverged: bool,
}

/// Time series of one run. A diverged run ends with a row flagged
/// `diverged`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub config: AgentConfig,
    pub rows: Vec<RunRow>,
    pub diverged: bool,
    /// Update (or environment step) at which divergence was detected.
    pub diverged_at: Option<usize>,
    pub wall_clock_secs: f64,
}

impl RunRecord {
    /// Rows and outcome, without the wall-clock measurement.
    pub fn same_trajectory(&self, other: &RunRecord) -> bool {
        let bits = |r: &RunRow| {
            (
                r.step,
                r.eval_return.to_bits(),
                r.critic_loss.to_bits(),
                r.log10_mean_abs_q.to_bits(),
                r.diverged,
            )
        };
        self.config == other.config
            && self.diverged == other.diverged
            && self.diverged_at == other.diverged_at
            && self.rows.len() == other.rows.len()
            && self
                .rows
                .iter()
                .zip(&other.rows)
                .all(|(a, b)| bits(a) == bits(b))
    }

    pub fn final_eval_return(&self) -> Option<f64> {
        self.rows
            .iter()
            .rev()
            .map(|r| r.eval_return)
            .find(|v| !v.is_nan())
    }

    pub fn best_eval_return(&self) -> Option<f64> {
        self.rows
            .iter()
            .map(|r| r.eval_return)
            .filter(|v| !v.is_nan())
            .reduce(f64::max)
    }
}

/// `log10` of a mean absolute value, floored for exact zeros.
pub fn log10_floored(v: f64) -> f64 {
    if v == 0.0 {
        LOG_FLOOR
    } else {
        v.log10().max(LOG_FLOOR)
    }
}

/// The probe batch for a seed: a random-policy rollout independent of the
/// agent configuration, so every configuration is measured on the same
/// transitions.
pub fn probe_batch(seed: u64) -> Result<Batch> {
    let mut env = PendulumEnv::new(0);
    build_fixed_buffer(
        &mut env,
        BufferPolicy::Random,
        PROBE_SIZE,
        seed ^ PROBE_SALT,
    )?
    .enumerate()
}

/// Mean |Q₁(s, a)| over `probe`. Uses running statistics; a critic whose
/// normalization has not gathered any yet normalizes the probe by its own
/// batch moments.
pub fn probe_mean_abs_q(nets: &AgentNets, probe: &Batch) -> Result<f64> {
    let x = Mat::hstack(&probe.s, &probe.a)?;
    let critic = &nets.critics[0];
    let ready = critic.norm_layers().all(|n| {
        matches!(
            n.spec.kind,
            crate::norm::NormKind::None | crate::norm::NormKind::Layer
        ) || n.state.has_statistics()
    });
    let q = if ready {
        critic.predict(&x)?
    } else {
        let mut c = critic.clone();
        c.forward(&x, NormCtx::new(NormMode::TRAIN_FROZEN, Layout::Single))?
            .0
    };
    Ok(q.data().iter().map(|v| v.abs()).sum::<f64>() / q.rows() as f64)
}

/// Average return of `episodes` noise-free episodes from fixed start states.
pub fn evaluate(nets: &AgentNets, episodes: usize, seed: u64) -> Result<f64> {
    if episodes == 0 {
        return Ok(f64::NAN);
    }
    let mut env = PendulumEnv::new(seed ^ EVAL_SALT);
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut obs = env.reset();
        loop {
            let a = nets.act(&obs)?;
            let (next, r, done) = env.step(a[0])?;
            total += r;
            obs = next;
            if done {
                break;
            }
        }
    }
    Ok(total / episodes as f64)
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::Numeric(_) | Error::NumericOverflow { .. })
}

/// A DDPG or TD3 learner: networks, optimizers, and update schedule.
#[derive(Clone, Debug)]
pub struct Agent {
    pub cfg: AgentConfig,
    pub nets: AgentNets,
    pub opts: AgentOpts,
    critic_updates: usize,
    actor_updates: usize,
    noise_rng: Rng,
}

impl Agent {
    pub fn new(cfg: &AgentConfig, obs_dim: usize, act_dim: usize) -> Result<Self> {
        cfg.validate()?;
        let mut init = seeded(cfg.seed, streams::INIT);
        Ok(Agent {
            cfg: cfg.clone(),
            nets: AgentNets::new(cfg, obs_dim, act_dim, &mut init)?,
            opts: AgentOpts::new(cfg),
            critic_updates: 0,
            actor_updates: 0,
            noise_rng: seeded(cfg.seed, streams::NOISE),
        })
    }

    pub fn critic_updates(&self) -> usize {
        self.critic_updates
    }

    pub fn actor_updates(&self) -> usize {
        self.actor_updates
    }

    /// One critic step, then (every `policy_delay` critic steps) one actor
    /// step and a soft update of the targets.
    pub fn update(&mut self, buffer: &ReplayBuffer, replay: &mut Rng) -> Result<CriticStep> {
        let batch = buffer.sample(self.cfg.batch_size, replay)?;
        let moments = match self.cfg.moment_batch {
            Some(m) => Some(buffer.sample(m.min(buffer.len()), replay)?),
            None => None,
        };
        let step = critic_update(
            &batch,
            moments.as_ref(),
            &mut self.nets,
            &mut self.opts,
            &self.cfg,
            &mut self.noise_rng,
        )?;
        self.critic_updates += 1;
        if self.critic_updates % self.cfg.policy_delay == 0 {
            actor_update(&batch, &mut self.nets, &mut self.opts)?;
            self.actor_updates += 1;
            soft_update_all(&mut self.nets, self.cfg.tau)?;
        }
        Ok(step)
    }

    /// Exploration action: actor output plus Gaussian noise, clipped.
    pub fn explore(&mut self, obs: &[f64]) -> Result<Vec<f64>> {
        let mut a = self.nets.act(obs)?;
        if self.cfg.expl_noise > 0.0 {
            let normal = Normal::new(0.0, self.cfg.expl_noise).expect("positive scale");
            for v in &mut a {
                *v = (*v + normal.sample(&mut self.noise_rng)).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }
}

struct Logger {
    rows: Vec<RunRow>,
    loss_sum: f64,
    loss_count: usize,
}

impl Logger {
    fn new() -> Self {
        Logger {
            rows: Vec::new(),
            loss_sum: 0.0,
            loss_count: 0,
        }
    }

    fn loss(&mut self, l: f64) {
        self.loss_sum += l;
        self.loss_count += 1;
    }

    fn row(&mut self, step: usize, eval_return: f64, mean_abs_q: f64, diverged: bool) {
        let critic_loss = if self.loss_count == 0 {
            f64::NAN
        } else {
            self.loss_sum / self.loss_count as f64
        };
        self.rows.push(RunRow {
            step,
            eval_return,
            critic_loss,
            log10_mean_abs_q: if mean_abs_q.is_nan() {
                f64::NAN
            } else {
                log10_floored(mean_abs_q)
            },
            diverged,
        });
        self.loss_sum = 0.0;
        self.loss_count = 0;
    }
}

/// Outcome of a divergence check.
enum Check {
    Fine(f64),
    Diverged(f64),
}

fn check_probe(nets: &AgentNets, probe: &Batch) -> Result<Check> {
    match probe_mean_abs_q(nets, probe) {
        Ok(q) if q.is_finite() && q <= DIVERGENCE_THRESHOLD => Ok(Check::Fine(q)),
        Ok(q) => Ok(Check::Diverged(q)),
        Err(e) if is_divergence(&e) => Ok(Check::Diverged(f64::INFINITY)),
        Err(e) => Err(e),
    }
}

/// Online training on the pendulum: `warmup` uniformly random steps, then
/// one update per environment step with periodic evaluation.
pub fn train(cfg: &AgentConfig) -> Result<RunRecord> {
    let start = Instant::now();
    let mut agent = Agent::new(cfg, OBS_DIM, ACT_DIM)?;
    let probe = probe_batch(cfg.seed)?;
    let mut env = PendulumEnv::new(cfg.seed);
    let mut obs = env.reset_seeded(cfg.seed);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, OBS_DIM, ACT_DIM)?;
    let mut replay = seeded(cfg.seed, streams::REPLAY);
    let mut warm = seeded(cfg.seed, streams::WARMUP);
    let mut log = Logger::new();
    let mut diverged_at = None;

    for t in 1..=cfg.total_steps {
        let a = if t <= cfg.warmup {
            vec![warm.random_range(-1.0..=1.0)]
        } else {
            agent.explore(&obs)?
        };
        let (next, r, done) = env.step(a[0])?;
        buffer.push(Transition {
            s: obs.to_vec(),
            a,
            r,
            s_next: next.to_vec(),
            done,
        })?;
        obs = if done { env.reset() } else { next };

        if t > cfg.warmup && buffer.len() >= cfg.batch_size {
            match agent.update(&buffer, &mut replay) {
                Ok(step) => log.loss(step.loss),
                Err(e) if is_divergence(&e) => {
                    diverged_at = Some(t);
                    log.row(t, f64::NAN, f64::INFINITY, true);
                    break;
                }
                Err(e) => return Err(e),
            }
            if agent.critic_updates() % DIVERGENCE_CHECK_INTERVAL == 0 {
                if let Check::Diverged(q) = check_probe(&agent.nets, &probe)? {
                    diverged_at = Some(t);
                    log.row(t, f64::NAN, q, true);
                    break;
                }
            }
        }
        if t % cfg.eval_interval == 0 {
            match check_probe(&agent.nets, &probe)? {
                Check::Fine(q) => {
                    let ret = evaluate(&agent.nets, cfg.eval_episodes, cfg.seed)?;
                    log.row(t, ret, q, false);
                }
                Check::Diverged(q) => {
                    diverged_at = Some(t);
                    log.row(t, f64::NAN, q, true);
                    break;
                }
            }
        }
    }
    Ok(RunRecord {
        config: cfg.clone(),
        rows: log.rows,
        diverged: diverged_at.is_some(),
        diverged_at,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Policy evaluation and improvement from an immutable buffer only:
/// `total_steps` updates, no environment interaction. The probe batch is
/// drawn from the buffer itself.
pub fn policy_eval_fixed_buffer(cfg: &AgentConfig, buffer: &ReplayBuffer) -> Result<RunRecord> {
    let start = Instant::now();
    let mut agent = Agent::new(cfg, buffer.obs_dim(), buffer.act_dim())?;
    let mut probe_rng = seeded(cfg.seed, streams::PROBE);
    let probe = buffer.sample(PROBE_SIZE.min(buffer.len()), &mut probe_rng)?;
    let mut replay = seeded(cfg.seed, streams::REPLAY);
    let mut log = Logger::new();
    let mut diverged_at = None;

    for u in 1..=cfg.total_steps {
        match agent.update(buffer, &mut replay) {
            Ok(step) => log.loss(step.loss),
            Err(e) if is_divergence(&e) => {
                diverged_at = Some(u);
                log.row(u, f64::NAN, f64::INFINITY, true);
                break;
            }
            Err(e) => return Err(e),
        }
        let at_row = u % cfg.eval_interval == 0;
        if at_row || u % DIVERGENCE_CHECK_INTERVAL == 0 {
            match check_probe(&agent.nets, &probe)? {
                Check::Fine(q) => {
                    if at_row {
                        log.row(u, f64::NAN, q, false);
                    }
                }
                Check::Diverged(q) => {
                    diverged_at = Some(u);
                    log.row(u, f64::NAN, q, true);
                    break;
                }
            }
        }
    }
    Ok(RunRecord {
        config: cfg.clone(),
        rows: log.rows,
        diverged: diverged_at.is_some(),
        diverged_at,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}
