use std::f64::consts::PI;

use rand::Rng as _;

use crate::error::{contract, Result};
use crate::numcore::rng::{seeded, streams, Rng};

pub const GRAVITY: f64 = 10.0;
pub const MASS: f64 = 1.0;
pub const LENGTH: f64 = 1.0;
pub const DT: f64 = 0.05;
pub const MAX_SPEED: f64 = 8.0;
pub const MAX_TORQUE: f64 = 2.0;
pub const EPISODE_STEPS: usize = 200;
pub const OBS_DIM: usize = 3;
pub const ACT_DIM: usize = 1;

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if t <= -PI {
        t += 2.0 * PI;
    }
    t
}

/// Torque-limited pendulum swing-up. `θ = 0` is upright.
///
/// Observation `(cos θ, sin θ, θ̇/8)`; the action in `[−1, 1]` maps to a
/// torque of `2·action`. The reward is charged on the state the action is
/// applied in.
#[derive(Clone, Debug)]
pub struct PendulumEnv {
    theta: f64,
    theta_dot: f64,
    steps: usize,
    rng: Rng,
}

impl PendulumEnv {
    pub fn new(seed: u64) -> Self {
        PendulumEnv {
            theta: 0.0,
            theta_dot: 0.0,
            steps: 0,
            rng: seeded(seed, streams::ENV),
        }
    }

    /// Reseeds the environment and samples a fresh start state.
    pub fn reset_seeded(&mut self, seed: u64) -> [f64; OBS_DIM] {
        self.rng = seeded(seed, streams::ENV);
        self.reset()
    }

    /// Samples `θ ~ U(−π, π)`, `θ̇ ~ U(−1, 1)` from the environment's RNG.
    pub fn reset(&mut self) -> [f64; OBS_DIM] {
        self.theta = self.rng.random_range(-PI..PI);
        self.theta_dot = self.rng.random_range(-1.0..1.0);
        self.steps = 0;
        self.observation()
    }

    pub fn set_state(&mut self, theta: f64, theta_dot: f64) {
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.steps = 0;
    }

    pub fn state(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn observation(&self) -> [f64; OBS_DIM] {
        [
            self.theta.cos(),
            self.theta.sin(),
            self.theta_dot / MAX_SPEED,
        ]
    }

    /// Advances one semi-implicit Euler step. Returns
    /// `(observation, reward, done)`; `done` only at the time limit.
    pub fn step(&mut self, action: f64) -> Result<([f64; OBS_DIM], f64, bool)> {
        if !action.is_finite() {
            return contract(format!("non-finite action {}", action));
        }
        let u = (MAX_TORQUE * action).clamp(-MAX_TORQUE, MAX_TORQUE);
        let th = wrap_angle(self.theta);
        let reward = -(th * th + 0.1 * self.theta_dot * self.theta_dot + 0.001 * u * u);

        let accel =
            3.0 * GRAVITY / (2.0 * LENGTH) * self.theta.sin() + 3.0 / (MASS * LENGTH * LENGTH) * u;
        self.theta_dot = (self.theta_dot + accel * DT).clamp(-MAX_SPEED, MAX_SPEED);
        self.theta += self.theta_dot * DT;
        self.steps += 1;
        Ok((self.observation(), reward, self.steps >= EPISODE_STEPS))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic() {
        let a = PendulumEnv::new(7).reset();
        let b = PendulumEnv::new(7).reset();
        assert_eq!(a, b);
        let mut e = PendulumEnv::new(1);
        let c = e.reset_seeded(7);
        assert_eq!(a, c);
    }

    #[test]
    fn observation_on_unit_circle() {
        let mut e = PendulumEnv::new(3);
        for _ in 0..100 {
            let o = e.reset();
            assert!((o[0] * o[0] + o[1] * o[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reset_angle_mean_is_centered() {
        let mut e = PendulumEnv::new(11);
        let n = 10_000;
        let mean = (0..n)
            .map(|_| {
                e.reset();
                e.state().0
            })
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 0.1, "mean {}", mean);
    }

    #[test]
    fn upright_equilibrium_is_fixed() {
        let mut e = PendulumEnv::new(0);
        e.set_state(0.0, 0.0);
        let (_, r, done) = e.step(0.0).unwrap();
        assert_eq!(e.state(), (0.0, 0.0));
        assert_eq!(r, 0.0);
        assert!(!done);
    }

    #[test]
    fn one_euler_step_from_horizontal() {
        let mut e = PendulumEnv::new(0);
        e.set_state(PI / 2.0, 0.0);
        e.step(0.0).unwrap();
        let (th, thd) = e.state();
        assert!((thd - 0.75).abs() < 1e-14);
        assert!((th - (PI / 2.0 + 0.75 * DT)).abs() < 1e-14);
    }

    #[test]
    fn reward_never_positive_and_episode_ends() {
        let mut e = PendulumEnv::new(5);
        e.reset();
        let mut dones = 0;
        for i in 0..EPISODE_STEPS {
            let a = ((i as f64) * 0.37).sin();
            let (_, r, done) = e.step(a).unwrap();
            assert!(r <= 0.0);
            dones += done as usize;
        }
        assert_eq!(dones, 1);
    }

    #[test]
    fn nan_action_is_rejected() {
        let mut e = PendulumEnv::new(0);
        assert!(e.step(f64::NAN).is_err());
    }

    #[test]
    fn unforced_energy_stays_bounded() {
        // E = θ̇²/2 + (3g/2ℓ)·cos θ is conserved by the continuous dynamics;
        // symplectic Euler keeps the error within O(dt·k·|θ̇|).
        let k = 3.0 * GRAVITY / (2.0 * LENGTH);
        let energy = |e: &PendulumEnv| {
            let (t, td) = e.state();
            0.5 * td * td + k * t.cos()
        };
        let mut e = PendulumEnv::new(3);
        for _ in 0..50 {
            e.reset();
            let e0 = energy(&e);
            let mut worst: f64 = 0.0;
            for _ in 0..EPISODE_STEPS {
                e.step(0.0).unwrap();
                assert!(e.state().1.abs() <= MAX_SPEED);
                worst = worst.max((energy(&e) - e0).abs());
            }
            assert!(worst <= DT * k * MAX_SPEED, "energy drift {}", worst);
        }
    }

    #[test]
    fn wrap_into_half_open_interval() {
        assert!((wrap_angle(PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.0), 0.0);
    }
}
