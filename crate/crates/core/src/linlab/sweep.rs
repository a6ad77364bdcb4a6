use rayon::prelude::*;

use crate::error::{config, Error, Result};

use super::mdp::LinearMDP;
use super::td::{run_policy_eval, PolicyEvalConfig, RecenterParams};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    /// Inclusive `(lo, hi)`.
    pub alpha_range: (f64, f64),
    pub beta_range: (f64, f64),
    /// Points per axis.
    pub resolution: usize,
    pub eval: PolicyEvalConfig,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            alpha_range: (-0.5, 2.0),
            beta_range: (-0.5, 2.0),
            resolution: 26,
            eval: PolicyEvalConfig {
                gamma: Some(0.99),
                ..PolicyEvalConfig::default()
            },
            jobs: 0,
        }
    }
}

fn axis(range: (f64, f64), n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64)
        .collect()
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return config(format!(
                "grid resolution must be at least 2, got {}",
                self.resolution
            ));
        }
        for (name, r) in [("alpha", self.alpha_range), ("beta", self.beta_range)] {
            if !(r.0.is_finite() && r.1.is_finite() && r.0 < r.1) {
                return config(format!(
                    "{} range {:?} must be finite and increasing",
                    name, r
                ));
            }
        }
        self.eval.validate()
    }

    pub fn alphas(&self) -> Vec<f64> {
        axis(self.alpha_range, self.resolution)
    }

    pub fn betas(&self) -> Vec<f64> {
        axis(self.beta_range, self.resolution)
    }
}

/// Final `log10 |V̄|` per `(α, β)` cell, row-major in α.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub log10_vbar: Vec<f64>,
    pub diverged: Vec<bool>,
}

impl SweepGrid {
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.betas.len() + j
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.log10_vbar[self.index(i, j)]
    }

    pub fn is_diverged(&self, i: usize, j: usize) -> bool {
        self.diverged[self.index(i, j)]
    }

    /// Cells as `(α, β, log10 |V̄|, diverged)` in storage order.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64, bool)> + '_ {
        self.alphas.iter().enumerate().flat_map(move |(i, &a)| {
            self.betas
                .iter()
                .enumerate()
                .map(move |(j, &b)| (a, b, self.value(i, j), self.is_diverged(i, j)))
        })
    }
}

/// One independent policy-evaluation run per grid cell. Results do not
/// depend on the thread count.
pub fn phase_sweep(mdp: &LinearMDP, cfg: &SweepConfig) -> Result<SweepGrid> {
    cfg.validate()?;
    let alphas = cfg.alphas();
    let betas = cfg.betas();
    let cells: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| (a, b)))
        .collect();
    let run = || {
        cells
            .par_iter()
            .map(|&(a, b)| {
                run_policy_eval(mdp, RecenterParams::new(a, b), &cfg.eval)
                    .map(|t| (t.final_log10(), t.diverged))
            })
            .collect::<Result<Vec<_>>>()
    };
    let results = if cfg.jobs == 0 {
        run()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {}", e)))?
            .install(run)?
    };
    let (log10_vbar, diverged) = results.into_iter().unzip();
    Ok(SweepGrid {
        alphas,
        betas,
        log10_vbar,
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linlab::mdp::build_baird;

    fn small() -> SweepConfig {
        SweepConfig {
            resolution: 4,
            eval: PolicyEvalConfig {
                iterations: 300,
                ..SweepConfig::default().eval
            },
            ..SweepConfig::default()
        }
    }

    #[test]
    fn default_axis_steps_by_a_tenth() {
        let a = SweepConfig::default().alphas();
        assert_eq!(a.len(), 26);
        assert_eq!(a[0], -0.5);
        assert_eq!(a[25], 2.0);
        assert!((a[15] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let m = build_baird();
        let one = phase_sweep(&m, &SweepConfig { jobs: 1, ..small() }).unwrap();
        let three = phase_sweep(&m, &SweepConfig { jobs: 3, ..small() }).unwrap();
        assert_eq!(one, three);
        assert_eq!(one.log10_vbar.len(), 16);
        assert_eq!(one.cells().count(), 16);
    }

    #[test]
    fn resolution_one_rejected() {
        let cfg = SweepConfig {
            resolution: 1,
            ..SweepConfig::default()
        };
        assert!(phase_sweep(&build_baird(), &cfg).is_err());
    }
}
