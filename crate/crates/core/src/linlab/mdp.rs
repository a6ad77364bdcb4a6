use rand_distr::{Distribution, StandardNormal};

use crate::envs::ReplayBuffer;
use crate::error::{config, contract, Result};
use crate::norm::NormCtx;
use crate::numcore::rng::{seeded, streams};
use crate::numcore::{Activation, Mat, Mlp, MlpSpec};

/// Linear policy-evaluation problem `V(s; θ) = θᵀφ(s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMDP {
    /// `n × k`, one row per state.
    pub phi: Mat,
    /// `n × k` expected successor features under the target policy.
    pub phi_next: Mat,
    /// Behaviour distribution over states.
    pub d_mu: Vec<f64>,
    pub rewards: Vec<f64>,
    pub gamma: f64,
    pub theta0: Vec<f64>,
}

impl LinearMDP {
    pub fn new(
        phi: Mat,
        phi_next: Mat,
        d_mu: Vec<f64>,
        rewards: Vec<f64>,
        gamma: f64,
        theta0: Vec<f64>,
    ) -> Result<Self> {
        let n = phi.rows();
        if phi.shape() != phi_next.shape() {
            return config(format!(
                "feature shapes differ: {:?} vs {:?}",
                phi.shape(),
                phi_next.shape()
            ));
        }
        if d_mu.len() != n || rewards.len() != n || theta0.len() != phi.cols() {
            return config("distribution, rewards, or initial weights do not match the features");
        }
        if n == 0 {
            return contract("an MDP needs at least one state");
        }
        let total: f64 = d_mu.iter().sum();
        if d_mu.iter().any(|&p| p < 0.0 || !p.is_finite()) || (total - 1.0).abs() > 1e-9 {
            return config(format!("d_mu must be a probability vector (sum {})", total));
        }
        Ok(LinearMDP {
            phi,
            phi_next,
            d_mu,
            rewards,
            gamma,
            theta0,
        })
    }

    pub fn n_states(&self) -> usize {
        self.phi.rows()
    }

    pub fn n_features(&self) -> usize {
        self.phi.cols()
    }
}

/// Baird's seven-state star: `φ(sᵢ) = 2eᵢ + e₈` for `i ≤ 6`,
/// `φ(s₇) = e₇ + 2e₈`; the target policy always moves to `s₇`.
pub fn build_baird() -> LinearMDP {
    let (n, k) = (7, 8);
    let mut phi = Mat::zeros(n, k);
    for i in 0..6 {
        phi.set(i, i, 2.0);
        phi.set(i, 7, 1.0);
    }
    phi.set(6, 6, 1.0);
    phi.set(6, 7, 2.0);
    let last = phi.row(6).to_vec();
    let phi_next = Mat::from_rows(&vec![last; n]).expect("equal rows");
    let mut theta0 = vec![1.0; k];
    theta0[6] = 10.0;
    LinearMDP::new(
        phi,
        phi_next,
        vec![1.0 / n as f64; n],
        vec![0.0; n],
        0.99,
        theta0,
    )
    .expect("valid by construction")
}

/// Baird's transition structure with i.i.d. standard normal features.
pub fn build_random_variant(seed: u64, n_states: usize, k: usize) -> Result<LinearMDP> {
    if n_states == 0 || k == 0 {
        return config("random variant needs at least one state and one feature");
    }
    let mut rng = seeded(seed, streams::FEATURES);
    let data: Vec<f64> = (0..n_states * k)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let phi = Mat::new(n_states, k, data)?;
    let last = phi.row(n_states - 1).to_vec();
    let phi_next = Mat::from_rows(&vec![last; n_states])?;
    LinearMDP::new(
        phi,
        phi_next,
        vec![1.0 / n_states as f64; n_states],
        vec![0.0; n_states],
        0.99,
        vec![1.0; k],
    )
}

/// Penultimate-layer features of a frozen network as a linear evaluation
/// problem over the buffer: `Φ` from `(s, a)`, `Φ'` from `(s', π(s'))` with
/// `π` a frozen deterministic policy, `d_μ` uniform over the entries, zero
/// rewards.
pub fn frozen_feature_mdp(
    buffer: &ReplayBuffer,
    net: &Mlp,
    policy: &Mlp,
    gamma: f64,
) -> Result<LinearMDP> {
    if buffer.is_empty() {
        return contract("frozen-feature task on an empty buffer");
    }
    if net.layers.len() < 2 {
        return config("feature network needs a hidden layer");
    }
    let batch = buffer.enumerate()?;
    let a_next = policy.predict(&batch.s_next)?;
    let phi = penultimate(net, &Mat::hstack(&batch.s, &batch.a)?)?;
    let phi_next = penultimate(net, &Mat::hstack(&batch.s_next, &a_next)?)?;
    let n = phi.rows();
    let k = phi.cols();
    LinearMDP::new(
        phi,
        phi_next,
        vec![1.0 / n as f64; n],
        vec![0.0; n],
        gamma,
        vec![1.0; k],
    )
}

fn penultimate(net: &Mlp, x: &Mat) -> Result<Mat> {
    let mut frozen = net.clone();
    let (_, cache) = frozen.forward(x, NormCtx::eval())?;
    Ok(cache.penultimate().expect("checked depth").clone())
}

/// [`frozen_feature_mdp`] with a randomly initialized critic-shaped network
/// (hidden ReLU layers) and a random tanh policy, both drawn from `seed`.
pub fn frozen_feature_task(
    buffer: &ReplayBuffer,
    hidden: &[usize],
    seed: u64,
) -> Result<LinearMDP> {
    if buffer.is_empty() {
        return contract("frozen-feature task on an empty buffer");
    }
    let mut rng = seeded(seed, streams::FEATURES);
    let net = Mlp::init(
        &MlpSpec {
            input_dim: buffer.obs_dim() + buffer.act_dim(),
            hidden: hidden.to_vec(),
            output_dim: 1,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
            norm: crate::norm::NormSpec::none(),
            input_norm: false,
            late_inputs: 0,
        },
        &mut rng,
    )?;
    let policy = Mlp::init(
        &MlpSpec {
            input_dim: buffer.obs_dim(),
            hidden: hidden.to_vec(),
            output_dim: buffer.act_dim(),
            hidden_activation: Activation::Relu,
            output_activation: Activation::Tanh,
            norm: crate::norm::NormSpec::none(),
            input_norm: false,
            late_inputs: 0,
        },
        &mut rng,
    )?;
    frozen_feature_mdp(buffer, &net, &policy, 0.99)
}
