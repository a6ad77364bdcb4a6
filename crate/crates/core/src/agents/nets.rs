use rand_distr::{Distribution, Normal};

use super::config::AgentConfig;
use crate::envs::Batch;
use crate::error::{contract, Error, Result};
use crate::norm::{Layout, NormCtx, NormMode};
use crate::numcore::{Activation, Mat, Mlp, MlpSpec, OptState, OptimizerConfig};

/// Slowly tracking copies of the live networks.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetNets {
    pub actor: Mlp,
    pub critics: Vec<Mlp>,
}

/// Actor, one or two critics, and target copies when enabled.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentNets {
    pub actor: Mlp,
    pub critics: Vec<Mlp>,
    pub targets: Option<TargetNets>,
}

impl AgentNets {
    pub fn new<R: rand::Rng + ?Sized>(
        cfg: &AgentConfig,
        obs_dim: usize,
        act_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let actor_spec = MlpSpec {
            input_dim: obs_dim,
            hidden: cfg.hidden.clone(),
            output_dim: act_dim,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Tanh,
            norm: crate::norm::NormSpec::none(),
            input_norm: false,
            late_inputs: 0,
        };
        let critic_spec = MlpSpec {
            input_dim: obs_dim + act_dim,
            hidden: cfg.hidden.clone(),
            output_dim: 1,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
            norm: cfg.norm,
            input_norm: cfg.critic_input_norm(),
            late_inputs: if cfg.late_action { act_dim } else { 0 },
        };
        let actor = Mlp::init(&actor_spec, rng)?;
        let critics = (0..cfg.algorithm.critic_count())
            .map(|_| Mlp::init(&critic_spec, rng))
            .collect::<Result<Vec<_>>>()?;
        let targets = cfg.use_target_networks.then(|| TargetNets {
            actor: actor.clone(),
            critics: critics.clone(),
        });
        Ok(AgentNets {
            actor,
            critics,
            targets,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.actor.output_dim()
    }

    /// Deterministic action of the live actor for one observation.
    pub fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.actor.predict(&Mat::row_vector(obs))?.row(0).to_vec())
    }
}

/// Optimizer state for every trained network.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentOpts {
    pub actor: OptState,
    pub critics: Vec<OptState>,
}

impl AgentOpts {
    pub fn new(cfg: &AgentConfig) -> Self {
        AgentOpts {
            actor: OptState::new(OptimizerConfig::new(cfg.optimizer, cfg.actor_lr)),
            critics: (0..cfg.algorithm.critic_count())
                .map(|_| OptState::new(OptimizerConfig::new(cfg.optimizer, cfg.critic_lr)))
                .collect(),
        }
    }
}

/// Result of one critic optimization step.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticStep {
    /// Sum over critics of the mean squared TD error.
    pub loss: f64,
    /// Every normalization layer used identical moments for both streams.
    pub moments_shared: bool,
    /// Mean |Q(s, a)| of the first critic on this batch.
    pub mean_abs_q: f64,
}

fn critic_input(s: &Mat, a: &Mat) -> Result<Mat> {
    Mat::hstack(s, a)
}

/// `π(s')` from the target actor when present, else the live actor, with
/// clipped smoothing noise for TD3.
pub fn next_actions<R: rand::Rng + ?Sized>(
    nets: &AgentNets,
    cfg: &AgentConfig,
    s_next: &Mat,
    rng: &mut R,
) -> Result<Mat> {
    let actor = match &nets.targets {
        Some(t) => &t.actor,
        None => &nets.actor,
    };
    let mut a = actor.predict(s_next)?;
    if cfg.algorithm == super::Algorithm::Td3 && cfg.policy_noise > 0.0 {
        let normal = Normal::new(0.0, cfg.policy_noise).expect("positive scale");
        for v in a.data_mut() {
            let eps = normal.sample(rng).clamp(-cfg.noise_clip, cfg.noise_clip);
            *v = (*v + eps).clamp(-1.0, 1.0);
        }
    }
    Ok(a)
}

/// Bootstrap target from precomputed successor values, one column per
/// critic: `y = r + γ(1 − done)·min_i q_i`.
fn bootstrap(batch: &Batch, q_next: &[Mat], cfg: &AgentConfig) -> Vec<f64> {
    (0..batch.len())
        .map(|i| {
            let q = q_next
                .iter()
                .map(|m| m.get(i, 0))
                .fold(f64::INFINITY, f64::min);
            batch.r[i] + cfg.gamma * (1.0 - batch.done[i]) * q
        })
        .collect()
}

/// Successor values from the target critics, or `None` when the live
/// critics have to provide them through the dual forward.
fn target_values(nets: &mut AgentNets, x_on: &Mat) -> Result<Option<Vec<Mat>>> {
    match &mut nets.targets {
        Some(t) => {
            let ctx = NormCtx::new(NormMode::TRAIN_FROZEN, Layout::Single);
            let mut out = Vec::with_capacity(t.critics.len());
            for c in &mut t.critics {
                out.push(c.forward(x_on, ctx)?.0);
            }
            Ok(Some(out))
        }
        None => Ok(None),
    }
}

/// TD target for `batch`. Reads the target networks when enabled, else the
/// live ones through the same stacked forward a critic update performs
/// (without touching running statistics).
pub fn compute_critic_target<R: rand::Rng + ?Sized>(
    batch: &Batch,
    nets: &mut AgentNets,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let a_next = next_actions(nets, cfg, &batch.s_next, rng)?;
    let x_on = critic_input(&batch.s_next, &a_next)?;
    let q_next = match target_values(nets, &x_on)? {
        Some(q) => q,
        None => {
            let n = batch.len();
            let x = Mat::vstack(&[&critic_input(&batch.s, &batch.a)?, &x_on])?;
            let ctx = NormCtx::new(NormMode::TRAIN_FROZEN, Layout::Dual { off_rows: n });
            let mut out = Vec::new();
            for c in &mut nets.critics {
                out.push(c.forward(&x, ctx)?.0.slice_rows(n, 2 * n));
            }
            out
        }
    };
    Ok(bootstrap(batch, &q_next, cfg))
}

/// One optimization step of every critic on `batch`.
///
/// With `moments` given, a moment-only stacked forward on that (larger)
/// batch runs first and the update normalizes with its moments held fixed.
pub fn critic_update<R: rand::Rng + ?Sized>(
    batch: &Batch,
    moments: Option<&Batch>,
    nets: &mut AgentNets,
    opts: &mut AgentOpts,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<CriticStep> {
    let n = batch.len();
    if n == 0 {
        return contract("critic update on an empty batch");
    }
    let a_next = next_actions(nets, cfg, &batch.s_next, rng)?;
    let x_off = critic_input(&batch.s, &batch.a)?;
    let x_on = critic_input(&batch.s_next, &a_next)?;
    let dual = cfg.dual_forward();

    let mut mode = NormMode::TRAIN;
    if let Some(mb) = moments {
        let a_mb = next_actions(nets, cfg, &mb.s_next, rng)?;
        let x_mb = Mat::vstack(&[
            &critic_input(&mb.s, &mb.a)?,
            &critic_input(&mb.s_next, &a_mb)?,
        ])?;
        let layout = if dual {
            Layout::Dual { off_rows: mb.len() }
        } else {
            Layout::Single
        };
        let x_mb = if dual {
            x_mb
        } else {
            x_mb.slice_rows(0, mb.len())
        };
        for c in &mut nets.critics {
            c.forward(&x_mb, NormCtx::new(NormMode::TRAIN, layout))?;
        }
        mode = NormMode::Pinned;
    }

    let (x, ctx) = if dual {
        (
            Mat::vstack(&[&x_off, &x_on])?,
            NormCtx::new(mode, Layout::Dual { off_rows: n }),
        )
    } else {
        (x_off, NormCtx::new(mode, Layout::Single))
    };
    let mut outs = Vec::with_capacity(nets.critics.len());
    let mut moments_shared = true;
    for c in &mut nets.critics {
        let (q, cache) = c.forward(&x, ctx)?;
        moments_shared &= cache.norm_caches().all(|nc| nc.streams_share_moments());
        outs.push((q, cache));
    }
    if dual && cfg.norm.kind.is_cross() && !moments_shared {
        return contract("cross normalization used different moments for the two streams");
    }

    let q_next = match target_values(nets, &x_on)? {
        Some(q) => q,
        None => outs.iter().map(|(q, _)| q.slice_rows(n, 2 * n)).collect(),
    };
    let y = bootstrap(batch, &q_next, cfg);

    let mut loss = 0.0;
    let mut mean_abs_q = 0.0;
    for (i, ((q, cache), (critic, opt))) in outs
        .iter()
        .zip(nets.critics.iter_mut().zip(opts.critics.iter_mut()))
        .enumerate()
    {
        let mut grad = Mat::zeros(q.rows(), 1);
        let mut l = 0.0;
        for r in 0..n {
            let d = q.get(r, 0) - y[r];
            l += d * d;
            grad.set(r, 0, 2.0 * d / n as f64);
        }
        l /= n as f64;
        if !l.is_finite() {
            return Err(Error::Numeric(format!("non-finite critic loss {}", l)));
        }
        if i == 0 {
            mean_abs_q = (0..n).map(|r| q.get(r, 0).abs()).sum::<f64>() / n as f64;
        }
        loss += l;
        let grads = critic.backward(cache, &grad)?;
        opt.step(&mut critic.params_mut(), &grads.flat())?;
    }
    Ok(CriticStep {
        loss,
        moments_shared,
        mean_abs_q,
    })
}

/// One ascent step of the actor on `E[Q₁(s, π(s))]`. Returns the objective
/// before the step.
///
/// The critic normalizes with its running moments held constant and leaves
/// them untouched. Batch moments of `(s, π(s))` would make `Q` invariant to
/// shifting every action by the same amount, so the actor could never move
/// its mean action.
pub fn actor_update(batch: &Batch, nets: &mut AgentNets, opts: &mut AgentOpts) -> Result<f64> {
    let n = batch.len();
    if n == 0 {
        return contract("actor update on an empty batch");
    }
    let obs_dim = batch.s.cols();
    let (pi, acache) = nets.actor.forward(&batch.s, NormCtx::train())?;
    let x = critic_input(&batch.s, &pi)?;
    let critic = &mut nets.critics[0];
    let mode = if critic.norm_layers().all(|n| n.state.has_statistics()) {
        NormMode::Running
    } else {
        NormMode::TRAIN_FROZEN
    };
    let (q, ccache) = critic.forward(&x, NormCtx::new(mode, Layout::Single))?;
    let objective = q.data().iter().sum::<f64>() / n as f64;
    if !objective.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite actor objective {}",
            objective
        )));
    }
    let cg = critic.backward(&ccache, &Mat::filled(n, 1, -1.0 / n as f64))?;
    let grad_pi = cg.input.slice_cols(obs_dim, x.cols());
    let ag = nets.actor.backward(&acache, &grad_pi)?;
    opts.actor.step(&mut nets.actor.params_mut(), &ag.flat())?;
    Ok(objective)
}

/// `θ̄ ← τθ + (1−τ)θ̄` over all trainable parameters. Normalization running
/// statistics are copied from the live network.
pub fn soft_update(live: &Mlp, target: &mut Mlp, tau: f64) -> Result<()> {
    if live.param_count() != target.param_count() {
        return contract("target network does not mirror the live network");
    }
    for (t, l) in target.params_mut().into_iter().zip(live.params()) {
        if t.len() != l.len() {
            return contract("target network does not mirror the live network");
        }
        for (tv, lv) in t.iter_mut().zip(l) {
            *tv = tau * lv + (1.0 - tau) * *tv;
        }
    }
    for (tn, ln) in target.norm_layers_mut().zip(live.norm_layers()) {
        tn.state.running_mean.clone_from(&ln.state.running_mean);
        tn.state.running_var.clone_from(&ln.state.running_var);
        tn.state.step = ln.state.step;
    }
    Ok(())
}

/// Soft update of every target network.
pub fn soft_update_all(nets: &mut AgentNets, tau: f64) -> Result<()> {
    if let Some(t) = &mut nets.targets {
        soft_update(&nets.actor, &mut t.actor, tau)?;
        for (l, tc) in nets.critics.iter().zip(t.critics.iter_mut()) {
            soft_update(l, tc, tau)?;
        }
    }
    Ok(())
}
