//! Per-run and aggregate CSV files.

use std::fmt::Write as _;

use crossnorm::agents::{RunRecord, RunRow};
use crossnorm::linlab::SweepGrid;

pub const RUN_HEADER: &str = "step,eval_return,critic_loss,log10_mean_abs_q,diverged";
pub const AGGREGATE_HEADER: &str = "step,runs,eval_return_mean,eval_return_half_std,\
critic_loss_mean,critic_loss_half_std,log10_mean_abs_q_mean,log10_mean_abs_q_half_std,diverged_runs";
pub const SWEEP_HEADER: &str = "alpha,beta,log10_vbar,diverged";

/// Body of `run_<seed>.csv`. Floats use the shortest exact representation.
pub fn run_csv(record: &RunRecord) -> String {
    let mut s = String::from(RUN_HEADER);
    s.push('\n');
    for r in &record.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.step, r.eval_return, r.critic_loss, r.log10_mean_abs_q, r.diverged as u8
        );
    }
    s
}

#[derive(Debug, thiserror::Error)]
#[error("line {line}: {msg}")]
pub struct CsvError {
    pub line: usize,
    pub msg: String,
}

/// Reads back [`run_csv`].
pub fn parse_run_csv(text: &str) -> Result<Vec<RunRow>, CsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == RUN_HEADER => {}
        _ => {
            return Err(CsvError {
                line: 1,
                msg: format!("expected header '{}'", RUN_HEADER),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let err = |msg: &str| CsvError {
                line: i + 1,
                msg: msg.to_string(),
            };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(err("expected 5 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err("bad number"));
            Ok(RunRow {
                step: f[0].parse().map_err(|_| err("bad step"))?,
                eval_return: num(f[1])?,
                critic_loss: num(f[2])?,
                log10_mean_abs_q: num(f[3])?,
                diverged: match f[4] {
                    "0" => false,
                    "1" => true,
                    _ => return Err(err("diverged must be 0 or 1")),
                },
            })
        })
        .collect()
}

/// Mean and half of the population standard deviation.
pub fn mean_half_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, 0.5 * var.sqrt())
}

/// Cross-seed statistics of one logged step.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub step: usize,
    /// Runs that logged this step; diverged runs stop early.
    pub runs: usize,
    pub eval_return: (f64, f64),
    pub critic_loss: (f64, f64),
    pub log10_mean_abs_q: (f64, f64),
    pub diverged_runs: usize,
}

/// Per-step mean and half standard deviation over the runs that reached
/// each step, ordered by step.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut steps: Vec<usize> = records
        .iter()
        .flat_map(|r| r.rows.iter().map(|x| x.step))
        .collect();
    steps.sort_unstable();
    steps.dedup();
    steps
        .into_iter()
        .map(|step| {
            let rows: Vec<&RunRow> = records
                .iter()
                .filter_map(|r| r.rows.iter().find(|x| x.step == step))
                .collect();
            let col = |f: fn(&RunRow) -> f64| {
                mean_half_std(&rows.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            AggregateRow {
                step,
                runs: rows.len(),
                eval_return: col(|r| r.eval_return),
                critic_loss: col(|r| r.critic_loss),
                log10_mean_abs_q: col(|r| r.log10_mean_abs_q),
                diverged_runs: rows.iter().filter(|r| r.diverged).count(),
            }
        })
        .collect()
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut s = String::from(AGGREGATE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.step,
            r.runs,
            r.eval_return.0,
            r.eval_return.1,
            r.critic_loss.0,
            r.critic_loss.1,
            r.log10_mean_abs_q.0,
            r.log10_mean_abs_q.1,
            r.diverged_runs
        );
    }
    s
}

pub fn sweep_csv(grid: &SweepGrid) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for (a, b, v, d) in grid.cells() {
        let _ = writeln!(s, "{},{},{},{}", a, b, v, d as u8);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crossnorm::agents::AgentConfig;

    fn record(rows: &[(usize, f64)]) -> RunRecord {
        RunRecord {
            config: AgentConfig::default(),
            rows: rows
                .iter()
                .map(|&(step, v)| RunRow {
                    step,
                    eval_return: v,
                    critic_loss: 2.0 * v,
                    log10_mean_abs_q: -v,
                    diverged: false,
                })
                .collect(),
            diverged: false,
            diverged_at: None,
            wall_clock_secs: 0.0,
        }
    }

    #[test]
    fn two_run_average() {
        let agg = aggregate(&[record(&[(10, 1.0), (20, 3.0)]), record(&[(10, 3.0)])]);
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].runs, 2);
        assert_eq!(agg[0].eval_return, (2.0, 0.5));
        assert_eq!(agg[0].critic_loss, (4.0, 1.0));
        assert_eq!(agg[1].runs, 1);
        assert_eq!(agg[1].eval_return, (3.0, 0.0));
    }

    #[test]
    fn run_csv_round_trip() {
        let mut r = record(&[(1, 0.1), (2, f64::NAN)]);
        r.rows[1].diverged = true;
        r.rows[1].log10_mean_abs_q = f64::INFINITY;
        let text = run_csv(&r);
        assert!(text.starts_with("step,eval_return,critic_loss,log10_mean_abs_q,diverged\n"));
        let back = parse_run_csv(&text).unwrap();
        assert_eq!(back[0], r.rows[0]);
        assert!(back[1].eval_return.is_nan() && back[1].diverged);
        assert_eq!(back[1].log10_mean_abs_q, f64::INFINITY);
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(parse_run_csv("step,return\n1,2\n").is_err());
    }
}
