//! Pendulum environment, experience replay, and fixed-buffer datasets.

mod buffer;
mod pendulum;

pub use buffer::{Batch, ReplayBuffer, Transition};
pub use pendulum::{
    wrap_angle, PendulumEnv, ACT_DIM, DT, EPISODE_STEPS, GRAVITY, LENGTH, MASS, MAX_SPEED,
    MAX_TORQUE, OBS_DIM,
};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{config, Result};
use crate::numcore::rng::{seeded, streams};
use crate::numcore::{Mat, Mlp};

/// Behaviour policy used to fill a fixed buffer.
#[derive(Clone, Copy, Debug)]
pub enum BufferPolicy<'a> {
    /// Actions uniform on `[−1, 1]`.
    Random,
    /// A trained actor plus clipped Gaussian noise of the given scale.
    Actor { net: &'a Mlp, noise: f64 },
}

/// Rolls `policy` out for `steps` environment steps, resetting at episode
/// ends, and returns a buffer of exactly those transitions.
///
/// The environment is reset first, so the result depends only on `seed` and
/// the policy.
pub fn build_fixed_buffer(
    env: &mut PendulumEnv,
    policy: BufferPolicy<'_>,
    steps: usize,
    seed: u64,
) -> Result<ReplayBuffer> {
    if steps == 0 {
        return config("fixed buffer needs at least one step");
    }
    let mut buf = ReplayBuffer::new(steps, OBS_DIM, ACT_DIM)?;
    let mut rng = seeded(seed, streams::NOISE);
    let mut obs = env.reset_seeded(seed);
    for _ in 0..steps {
        let a = match policy {
            BufferPolicy::Random => rng.random_range(-1.0..=1.0),
            BufferPolicy::Actor { net, noise } => {
                let out = net.predict(&Mat::row_vector(&obs))?;
                let eps = if noise > 0.0 {
                    Normal::new(0.0, noise)
                        .expect("positive scale")
                        .sample(&mut rng)
                } else {
                    0.0
                };
                (out.get(0, 0) + eps).clamp(-1.0, 1.0)
            }
        };
        let (next, r, done) = env.step(a)?;
        buf.push(Transition {
            s: obs.to_vec(),
            a: vec![a],
            r,
            s_next: next.to_vec(),
            done,
        })?;
        obs = if done { env.reset() } else { next };
    }
    Ok(buf)
}
