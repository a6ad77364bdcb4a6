//! Runs a parsed experiment and writes its artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crossnorm::agents::{
    self, policy_eval_fixed_buffer, train, AgentConfig, RunRecord, DIVERGENCE_CHECK_INTERVAL,
    DIVERGENCE_THRESHOLD, PROBE_SIZE,
};
use crossnorm::envs::{build_fixed_buffer, BufferPolicy, PendulumEnv, ReplayBuffer};
use crossnorm::linlab::{
    self, build_baird, build_random_variant, frozen_feature_task, phase_sweep, LinearMDP,
    SweepConfig,
};
use crossnorm::numcore::gradcheck::{self, gradient_suite, CaseReport};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{BufferSource, ExperimentConfig, MdpSource, Payload};
use crate::output::{aggregate, aggregate_csv, run_csv, sweep_csv};
use crate::plot::{render_curves, render_heatmap, CurveSeries, Metric, SMOOTHING_WINDOW};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] crossnorm::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Files written by [`run_experiment`] plus a one-line verdict per seed.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
    /// Gradient cases above tolerance (norm-test only).
    pub failed_cases: usize,
    pub records: Vec<RunRecord>,
}

fn write(path: PathBuf, body: &str, out: &mut Outcome) -> Result<(), RunError> {
    fs::write(&path, body).map_err(|source| RunError::Io {
        path: path.clone(),
        source,
    })?;
    out.files.push(path);
    Ok(())
}

/// Runs `f` on a pool of `jobs` threads (0: rayon's default).
fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, RunError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map(|pool| pool.install(f))
        .map_err(|e| RunError::Pool(e.to_string()))
}

/// Executes the experiment. Diverged runs are results, not errors.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let dir = cfg.out.clone();
    fs::create_dir_all(&dir).map_err(|source| RunError::Io {
        path: dir.clone(),
        source,
    })?;
    let mut out = Outcome::default();
    match &cfg.payload {
        Payload::Train(agent) => {
            let records = run_seeds(cfg, agent, |a| train(a))?;
            agent_artifacts(&dir, "training", Metric::EvalReturn, records, &mut out)?;
        }
        Payload::FixedBuffer { agent, buffer } => {
            let buf = match buffer {
                BufferSource::File(p) => ReplayBuffer::load(p)?,
                BufferSource::Random { steps, seed } => {
                    let b = random_buffer(*steps, *seed)?;
                    let path = dir.join("buffer.bin");
                    b.save(&path)?;
                    out.files.push(path);
                    b
                }
            };
            let records = run_seeds(cfg, agent, |a| policy_eval_fixed_buffer(a, &buf))?;
            agent_artifacts(
                &dir,
                "fixed buffer",
                Metric::Log10MeanAbsQ,
                records,
                &mut out,
            )?;
        }
        Payload::PhaseDiagram { sweep, mdp } => {
            let sweep = SweepConfig {
                jobs: cfg.jobs,
                ..sweep.clone()
            };
            for &seed in &cfg.seeds {
                let problem = build_mdp(mdp, seed)?;
                let grid = phase_sweep(&problem, &sweep)?;
                let diverged = grid.diverged.iter().filter(|d| **d).count();
                write(
                    dir.join(format!("sweep_{}.csv", seed)),
                    &sweep_csv(&grid),
                    &mut out,
                )?;
                let title = format!("final log10 |V| ({} MDP, seed {})", mdp_name(mdp), seed);
                write(
                    dir.join(format!("heatmap_{}.svg", seed)),
                    &render_heatmap(&grid, &title),
                    &mut out,
                )?;
                out.summary.push(format!(
                    "seed {}: {} of {} cells diverged",
                    seed,
                    diverged,
                    grid.log10_vbar.len()
                ));
            }
        }
        Payload::NormTest(nt) => {
            let reports = in_pool(cfg.jobs, || {
                cfg.seeds
                    .par_iter()
                    .map(|&s| gradient_suite(nt.cases, s))
                    .collect::<crossnorm::Result<Vec<_>>>()
            })??;
            for (&seed, rep) in cfg.seeds.iter().zip(&reports) {
                let failed = rep.iter().filter(|r| !r.passed()).count();
                out.failed_cases += failed;
                write(
                    dir.join(format!("normtest_{}.csv", seed)),
                    &normtest_csv(rep),
                    &mut out,
                )?;
                let worst = rep.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
                out.summary.push(format!(
                    "seed {}: {} of {} cases passed, worst relative error {:.3e}",
                    seed,
                    rep.len() - failed,
                    rep.len(),
                    worst
                ));
            }
        }
    }
    write(dir.join("run_meta.txt"), &run_meta(cfg, &out), &mut out)?;
    Ok(out)
}

fn run_seeds(
    cfg: &ExperimentConfig,
    agent: &AgentConfig,
    run: impl Fn(&AgentConfig) -> crossnorm::Result<RunRecord> + Sync,
) -> Result<Vec<RunRecord>, RunError> {
    let records = in_pool(cfg.jobs, || {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                run(&AgentConfig {
                    seed,
                    ..agent.clone()
                })
            })
            .collect::<crossnorm::Result<Vec<_>>>()
    })??;
    Ok(records)
}

fn agent_artifacts(
    dir: &Path,
    what: &str,
    metric: Metric,
    records: Vec<RunRecord>,
    out: &mut Outcome,
) -> Result<(), RunError> {
    for r in &records {
        write(
            dir.join(format!("run_{}.csv", r.config.seed)),
            &run_csv(r),
            out,
        )?;
        let verdict = match (r.diverged_at, r.final_eval_return()) {
            (Some(at), _) => format!("diverged at {}", at),
            (None, Some(ret)) => format!("final return {:.1}", ret),
            (None, None) => format!(
                "bounded, final log10 mean |Q| {:.2}",
                r.rows.last().map_or(f64::NAN, |x| x.log10_mean_abs_q)
            ),
        };
        out.summary.push(format!(
            "seed {}: {} ({:.1} s)",
            r.config.seed, verdict, r.wall_clock_secs
        ));
    }
    let agg = aggregate(&records);
    write(dir.join("aggregate.csv"), &aggregate_csv(&agg), out)?;
    let label = format!(
        "{} {} ({} seeds)",
        records[0].config.algorithm.as_str(),
        records[0].config.norm.kind.as_str(),
        records.len()
    );
    let svg = render_curves(
        &[CurveSeries::from_aggregate(label, &agg, metric)],
        &format!("{}: {}", what, metric.label()),
        metric.label(),
    );
    write(dir.join("curves.svg"), &svg, out)?;
    out.records = records;
    Ok(())
}

/// Transitions of a uniformly random policy on the pendulum.
pub fn random_buffer(steps: usize, seed: u64) -> crossnorm::Result<ReplayBuffer> {
    build_fixed_buffer(
        &mut PendulumEnv::new(seed),
        BufferPolicy::Random,
        steps,
        seed,
    )
}

fn mdp_name(m: &MdpSource) -> &'static str {
    match m {
        MdpSource::Baird => "Baird",
        MdpSource::Random { .. } => "random",
        MdpSource::Frozen { .. } => "frozen-feature",
    }
}

pub fn build_mdp(m: &MdpSource, seed: u64) -> crossnorm::Result<LinearMDP> {
    match m {
        MdpSource::Baird => Ok(build_baird()),
        MdpSource::Random { states, features } => build_random_variant(seed, *states, *features),
        MdpSource::Frozen {
            buffer_steps,
            hidden,
        } => frozen_feature_task(&random_buffer(*buffer_steps, seed)?, hidden, seed),
    }
}

fn normtest_csv(reports: &[CaseReport]) -> String {
    let mut s = String::from("case,layer,seed,max_rel_error,passed\n");
    for (i, r) in reports.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            i,
            r.case.as_str(),
            r.seed,
            r.max_rel_error,
            r.passed() as u8
        );
    }
    s
}

/// The resolved config plus every implementation constant a result depends
/// on, and the per-seed outcome.
fn run_meta(cfg: &ExperimentConfig, out: &Outcome) -> String {
    let mut s = String::from("# resolved config\n");
    s.push_str(&cfg.to_text());
    s.push_str("\n# constants\n");
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{}={}", k, v);
    };
    kv("version", env!("CARGO_PKG_VERSION").into());
    kv(
        "divergence_threshold",
        format!("{:?}", DIVERGENCE_THRESHOLD),
    );
    kv(
        "divergence_check_interval",
        DIVERGENCE_CHECK_INTERVAL.to_string(),
    );
    kv("probe_size", PROBE_SIZE.to_string());
    kv("log_floor", format!("{:?}", agents::LOG_FLOOR));
    kv(
        "linlab_divergence_cap",
        format!("{:?}", linlab::DIVERGENCE_CAP),
    );
    kv("linlab_log_floor", format!("{:?}", linlab::LOG_FLOOR));
    kv("smoothing_window", SMOOTHING_WINDOW.to_string());
    kv("band", "half population standard deviation".into());
    kv("fd_step", format!("{:?}", gradcheck::FD_STEP));
    kv("fd_floor", format!("{:?}", gradcheck::FD_FLOOR));
    kv("fd_tolerance", format!("{:?}", gradcheck::FD_TOLERANCE));
    s.push_str("\n# outcome\n");
    for line in &out.summary {
        let _ = writeln!(s, "{}", line);
    }
    s
}
