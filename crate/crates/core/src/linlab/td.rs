use crate::error::{config, Result};
use crate::numcore::Mat;

use super::mdp::LinearMDP;

/// Values above this mean |V| stop a run and mark it diverged.
pub const DIVERGENCE_CAP: f64 = 1e12;
/// Reported in place of `log10(0)`.
pub const LOG_FLOOR: f64 = -16.0;

/// Weights of the shift `m = E_μ[αφ(s) + βφ'(s)]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecenterParams {
    pub alpha: f64,
    pub beta: f64,
}

impl RecenterParams {
    pub const NONE: RecenterParams = RecenterParams {
        alpha: 0.0,
        beta: 0.0,
    };

    pub fn new(alpha: f64, beta: f64) -> Self {
        RecenterParams { alpha, beta }
    }
}

/// The shift vector `m` of [`recenter`].
pub fn shift_vector(mdp: &LinearMDP, p: RecenterParams) -> Vec<f64> {
    let k = mdp.n_features();
    let mut m = vec![0.0; k];
    for s in 0..mdp.n_states() {
        let d = mdp.d_mu[s];
        for ((mj, f), g) in m.iter_mut().zip(mdp.phi.row(s)).zip(mdp.phi_next.row(s)) {
            *mj += d * (p.alpha * f + p.beta * g);
        }
    }
    m
}

/// Subtracts the same `m` from every row of both feature matrices.
pub fn recenter(mdp: &LinearMDP, p: RecenterParams) -> (Mat, Mat) {
    if p.alpha == 0.0 && p.beta == 0.0 {
        return (mdp.phi.clone(), mdp.phi_next.clone());
    }
    let m = shift_vector(mdp, p);
    let shift = |x: &Mat| {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (v, mj) in out.row_mut(r).iter_mut().zip(&m) {
                *v -= mj;
            }
        }
        out
    };
    (shift(&mdp.phi), shift(&mdp.phi_next))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One expected semi-gradient TD(0) update over the behaviour distribution:
/// `θ + η Σ_s d(s)(r(s) + γθ·φ̂'(s) − θ·φ̂(s)) φ̂(s)`.
pub fn expected_td0_step(
    theta: &[f64],
    mdp: &LinearMDP,
    phi: &Mat,
    phi_next: &Mat,
    eta: f64,
    gamma: f64,
) -> Vec<f64> {
    let mut out = theta.to_vec();
    for s in 0..mdp.n_states() {
        let f = phi.row(s);
        let delta = mdp.rewards[s] + gamma * dot(theta, phi_next.row(s)) - dot(theta, f);
        let w = eta * mdp.d_mu[s] * delta;
        for (o, x) in out.iter_mut().zip(f) {
            *o += w * x;
        }
    }
    out
}

/// The expected update as an affine map `θ ↦ Aθ + b` with
/// `A = I + η Φ̂ᵀD(γΦ̂' − Φ̂)` and `b = η Φ̂ᵀDr`.
pub fn iteration_matrix(
    mdp: &LinearMDP,
    p: RecenterParams,
    eta: f64,
    gamma: f64,
) -> (Mat, Vec<f64>) {
    let (phi, phi_next) = recenter(mdp, p);
    let k = mdp.n_features();
    let mut a = Mat::identity(k);
    let mut b = vec![0.0; k];
    for s in 0..mdp.n_states() {
        let w = eta * mdp.d_mu[s];
        let f = phi.row(s);
        let g = phi_next.row(s);
        for i in 0..k {
            let wf = w * f[i];
            if wf == 0.0 {
                continue;
            }
            b[i] += wf * mdp.rewards[s];
            let row = a.row_mut(i);
            for j in 0..k {
                row[j] += wf * (gamma * g[j] - f[j]);
            }
        }
    }
    (a, b)
}

/// Mean absolute value estimate `(1/n) Σ_s |θ·φ̂(s)|`.
pub fn mean_abs_value(theta: &[f64], phi: &Mat) -> f64 {
    (0..phi.rows())
        .map(|s| dot(theta, phi.row(s)).abs())
        .sum::<f64>()
        / phi.rows() as f64
}

fn log10_floored(v: f64) -> f64 {
    if v > 0.0 {
        v.log10().max(LOG_FLOOR)
    } else {
        LOG_FLOOR
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyEvalConfig {
    pub iterations: usize,
    pub eta: f64,
    /// Discount; `None` uses the MDP's own.
    pub gamma: Option<f64>,
    pub cap: f64,
    /// Iterations between trace points (and divergence checks).
    pub log_interval: usize,
}

impl Default for PolicyEvalConfig {
    fn default() -> Self {
        PolicyEvalConfig {
            iterations: 50_000,
            eta: 1e-3,
            gamma: None,
            cap: DIVERGENCE_CAP,
            log_interval: 100,
        }
    }
}

impl PolicyEvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return config("iterations must be at least 1");
        }
        if self.log_interval == 0 {
            return config("log interval must be at least 1");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return config(format!("step size must be positive, got {}", self.eta));
        }
        if !(self.cap > 0.0) {
            return config(format!("divergence cap must be positive, got {}", self.cap));
        }
        if let Some(g) = self.gamma {
            if !(0.0..=1.0).contains(&g) {
                return config(format!("gamma must lie in [0, 1], got {}", g));
            }
        }
        Ok(())
    }
}

/// `log10 |V̄|` over one policy-evaluation run.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalTrace {
    /// `(iteration, log10 |V̄|)`, starting with iteration 0.
    pub points: Vec<(usize, f64)>,
    pub diverged: bool,
    pub theta: Vec<f64>,
}

impl EvalTrace {
    pub fn final_log10(&self) -> f64 {
        self.points.last().map(|p| p.1).unwrap_or(LOG_FLOOR)
    }
}

/// Iterates the expected TD(0) update from `θ₀`. Divergence is a result,
/// not an error: once |V̄| exceeds the cap (or goes non-finite) the cap is
/// recorded and the run stops.
pub fn run_policy_eval(
    mdp: &LinearMDP,
    p: RecenterParams,
    cfg: &PolicyEvalConfig,
) -> Result<EvalTrace> {
    cfg.validate()?;
    let gamma = cfg.gamma.unwrap_or(mdp.gamma);
    let (phi, _) = recenter(mdp, p);
    let (a, b) = iteration_matrix(mdp, p, cfg.eta, gamma);
    let k = mdp.n_features();
    let cap_log = cfg.cap.log10();
    let mut theta = mdp.theta0.clone();
    let mut next = vec![0.0; k];
    let mut points = vec![(0, log10_floored(mean_abs_value(&theta, &phi)))];
    let mut diverged = false;
    for it in 1..=cfg.iterations {
        for (i, n) in next.iter_mut().enumerate() {
            *n = dot(a.row(i), &theta) + b[i];
        }
        std::mem::swap(&mut theta, &mut next);
        if it % cfg.log_interval == 0 || it == cfg.iterations {
            let v = mean_abs_value(&theta, &phi);
            if !v.is_finite() || v > cfg.cap {
                points.push((it, cap_log));
                diverged = true;
                break;
            }
            points.push((it, log10_floored(v)));
        }
    }
    Ok(EvalTrace {
        points,
        diverged,
        theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linlab::mdp::build_baird;

    fn scalar_mdp() -> LinearMDP {
        let phi = Mat::new(1, 1, vec![1.0]).unwrap();
        LinearMDP::new(phi.clone(), phi, vec![1.0], vec![1.0], 0.0, vec![0.0]).unwrap()
    }

    #[test]
    fn scalar_td_step() {
        let m = scalar_mdp();
        let t = expected_td0_step(&[0.0], &m, &m.phi, &m.phi_next, 1.0, 0.0);
        assert_eq!(t, vec![1.0]);
    }

    #[test]
    fn zero_weights_are_a_fixed_point() {
        let m = build_baird();
        for p in [
            RecenterParams::NONE,
            RecenterParams::new(0.3, 1.7),
            RecenterParams::new(-0.5, 2.0),
        ] {
            let (f, g) = recenter(&m, p);
            let t = expected_td0_step(&[0.0; 8], &m, &f, &g, 1e-3, 0.99);
            assert_eq!(t, vec![0.0; 8]);
        }
    }

    #[test]
    fn no_recentering_is_identity() {
        let m = build_baird();
        let (f, g) = recenter(&m, RecenterParams::NONE);
        assert_eq!(f, m.phi);
        assert_eq!(g, m.phi_next);
    }

    #[test]
    fn plain_centering_uses_column_means() {
        let m = build_baird();
        let s = shift_vector(&m, RecenterParams::new(1.0, 0.0));
        for j in 0..8 {
            let mean = m.phi.col(j).iter().sum::<f64>() / 7.0;
            assert!((s[j] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn both_streams_get_the_same_shift() {
        let m = build_baird();
        let (f, g) = recenter(&m, RecenterParams::new(0.5, 0.5));
        // 0.5·colmean(Φ) + 0.5·φ(s₇)
        let expect: Vec<f64> = (0..8)
            .map(|j| 0.5 * m.phi.col(j).iter().sum::<f64>() / 7.0 + 0.5 * m.phi.get(6, j))
            .collect();
        for r in 0..7 {
            for j in 0..8 {
                assert!((m.phi.get(r, j) - f.get(r, j) - expect[j]).abs() < 1e-15);
                assert!((m.phi_next.get(r, j) - g.get(r, j) - expect[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn affine_map_matches_direct_steps() {
        let m = build_baird();
        let p = RecenterParams::new(0.7, 0.2);
        let (f, g) = recenter(&m, p);
        let (a, b) = iteration_matrix(&m, p, 1e-2, 0.99);
        let mut direct = m.theta0.clone();
        let mut affine = m.theta0.clone();
        for _ in 0..200 {
            direct = expected_td0_step(&direct, &m, &f, &g, 1e-2, 0.99);
            affine = (0..8).map(|i| dot(a.row(i), &affine) + b[i]).collect();
        }
        for (x, y) in direct.iter().zip(&affine) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{} vs {}", x, y);
        }
    }

    #[test]
    fn zero_features_hit_the_floor() {
        let z = Mat::zeros(3, 2);
        let m = LinearMDP::new(
            z.clone(),
            z,
            vec![1.0 / 3.0; 3],
            vec![0.0; 3],
            0.99,
            vec![1.0; 2],
        )
        .unwrap();
        let cfg = PolicyEvalConfig {
            iterations: 50,
            log_interval: 10,
            ..Default::default()
        };
        let t = run_policy_eval(&m, RecenterParams::NONE, &cfg).unwrap();
        assert!(t.points.iter().all(|p| p.1 == LOG_FLOOR));
        assert_eq!(t.points.len(), 6);
    }

    #[test]
    fn divergence_stops_at_the_cap() {
        // φ' = 2φ with γ = 1: each step multiplies θ by 1 + η.
        let phi = Mat::new(1, 1, vec![1.0]).unwrap();
        let next = Mat::new(1, 1, vec![2.0]).unwrap();
        let m = LinearMDP::new(phi, next, vec![1.0], vec![0.0], 1.0, vec![1.0]).unwrap();
        let cfg = PolicyEvalConfig {
            iterations: 10_000,
            eta: 0.5,
            cap: 1e6,
            log_interval: 1,
            ..Default::default()
        };
        let t = run_policy_eval(&m, RecenterParams::NONE, &cfg).unwrap();
        assert!(t.diverged);
        assert_eq!(t.final_log10(), 6.0);
        assert!(t.points.len() < 100);
    }

    #[test]
    fn bad_config_rejected() {
        let m = build_baird();
        let cfg = PolicyEvalConfig {
            iterations: 0,
            ..Default::default()
        };
        assert!(run_policy_eval(&m, RecenterParams::NONE, &cfg).is_err());
    }
}
