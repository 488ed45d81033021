//! The four delivery-time studies plus a free-form run. Each sweep point is
//! an independent simulation; points run in parallel and results are
//! assembled in input order.

use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig};
use crate::metrics::{render_csv, CsvRow, MetricsError};
use crate::node::{run_network, NetworkError, NetworkParams};

pub const DEFAULT_INTERVALS_US: &[u64] = &[250, 500, 1000, 1900];
pub const DEFAULT_SAMPLING_MS: &[u64] = &[200, 50, 10];
pub const DEFAULT_DISTANCES_M: &[f64] = &[0.4, 2.5, 5.0];
pub const DEFAULT_ROBOT_COUNTS: &[usize] = &[1, 2, 6];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{0} list is empty")]
    EmptyList(&'static str),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub param: f64,
    pub seed: u64,
    pub satisfied: bool,
    pub conserved: bool,
    pub trace_hash: String,
    pub trace: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub experiment: &'static str,
    pub rows: Vec<CsvRow>,
    pub runs: Vec<RunRecord>,
    /// Extra `#` lines appended after the data, e.g. telemetry increases.
    pub notes: Vec<String>,
}

impl ExperimentOutput {
    pub fn all_satisfied(&self) -> bool {
        self.runs.iter().all(|r| r.satisfied)
    }

    pub fn all_conserved(&self) -> bool {
        self.runs.iter().all(|r| r.conserved)
    }

    /// SHA-256 over the per-run trace hashes in run order.
    pub fn trace_digest(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.runs {
            h.update(r.trace_hash.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Mean of per-row means at each param, optionally for one robot.
    pub fn mean_by_param(&self, robot: Option<u8>) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64, usize)> = Vec::new();
        for row in &self.rows {
            if robot.is_some_and(|id| row.stats.robot_id.get() != id) {
                continue;
            }
            match out.iter_mut().find(|(p, _, _)| *p == row.param) {
                Some((_, sum, n)) => {
                    *sum += row.stats.mean;
                    *n += 1;
                }
                None => out.push((row.param, row.stats.mean, 1)),
            }
        }
        out.into_iter()
            .map(|(p, sum, n)| (p, sum / n as f64))
            .collect()
    }

    /// Config echo, CSV body, then notes.
    pub fn render(&self, cfg: &ScenarioConfig) -> Result<String, ExperimentError> {
        let mut text = format!("# experiment = \"{}\"\n", self.experiment);
        for line in cfg.echo_lines() {
            text.push_str("# ");
            text.push_str(&line);
            text.push('\n');
        }
        text.push_str(&render_csv(&self.rows)?);
        for n in &self.notes {
            text.push_str("# ");
            text.push_str(n);
            text.push('\n');
        }
        Ok(text)
    }

    pub fn write(&self, path: &Path, cfg: &ScenarioConfig) -> Result<(), ExperimentError> {
        let text = self.render(cfg)?;
        std::fs::write(path, text).map_err(MetricsError::from)?;
        Ok(())
    }
}

struct Job {
    param: f64,
    params: NetworkParams,
}

fn run_jobs(experiment: &'static str, jobs: Vec<Job>) -> Result<ExperimentOutput, ExperimentError> {
    for j in &jobs {
        j.params.validate()?;
    }
    let results: Vec<_> = jobs
        .into_par_iter()
        .map(|job| {
            let (window, warmup, seed) = (job.params.window, job.params.warmup, job.params.seed);
            let res = run_network(job.params)?;
            let mut rows = Vec::new();
            let mut satisfied = res.satisfied;
            for r in (0..res.robots.len()).filter(|&r| res.robots[r].controlled) {
                match res.stats(r, window, warmup) {
                    Ok(stats) => rows.push(CsvRow {
                        experiment: experiment.to_string(),
                        param: job.param,
                        seed,
                        stats,
                    }),
                    Err(_) => satisfied = false,
                }
            }
            let record = RunRecord {
                param: job.param,
                seed,
                satisfied,
                conserved: res.is_conserved(),
                trace_hash: res.trace_hash,
                trace: res.trace,
            };
            Ok::<_, ExperimentError>((rows, record))
        })
        .collect();
    let mut out = ExperimentOutput {
        experiment,
        rows: Vec::new(),
        runs: Vec::new(),
        notes: Vec::new(),
    };
    for r in results {
        let (rows, record) = r?;
        out.rows.extend(rows);
        out.runs.push(record);
    }
    Ok(out)
}

fn seeds(cfg: &ScenarioConfig, repeat: usize) -> impl Iterator<Item = u64> + '_ {
    (0..repeat.max(1) as u64).map(move |k| cfg.seed + k)
}

/// Single robot at each send interval, `cfg.repeat` seeds per interval.
pub fn interval_sweep(
    cfg: &ScenarioConfig,
    intervals_us: &[u64],
) -> Result<ExperimentOutput, ExperimentError> {
    if intervals_us.is_empty() {
        return Err(ExperimentError::EmptyList("interval"));
    }
    let mut jobs = Vec::new();
    for &iv in intervals_us {
        for seed in seeds(cfg, cfg.repeat) {
            let mut p = cfg.network_params();
            p.robot_count = 1;
            p.controlled_robots = 0;
            p.send_interval_us = iv;
            p.seed = seed;
            jobs.push(Job {
                param: iv as f64,
                params: p,
            });
        }
    }
    run_jobs("interval-sweep", jobs)
}

/// One controlled robot at the configured send interval while
/// `cfg.telemetry_robots` robots report telemetry. Sampling 0 (telemetry
/// off) is always run first as the baseline.
pub fn telemetry_sweep(
    cfg: &ScenarioConfig,
    sampling_ms: &[u64],
) -> Result<ExperimentOutput, ExperimentError> {
    if sampling_ms.is_empty() {
        return Err(ExperimentError::EmptyList("sampling"));
    }
    let mut points = vec![0u64];
    points.extend(sampling_ms.iter().copied().filter(|&s| s != 0));
    let jobs = points
        .iter()
        .map(|&s| {
            let mut p = cfg.network_params();
            p.robot_count = cfg.telemetry_robots.max(1);
            p.controlled_robots = 1;
            p.telemetry_interval_ms = s;
            Job {
                param: s as f64,
                params: p,
            }
        })
        .collect();
    let mut out = run_jobs("telemetry-sweep", jobs)?;
    let means = out.mean_by_param(Some(0));
    if let Some(&(_, base)) = means.iter().find(|(p, _)| *p == 0.0) {
        for &s in &points {
            if let Some(&(_, m)) = means.iter().find(|(p, _)| *p == s as f64) {
                out.notes.push(format!(
                    "increase sampling_ms={s} mean_us={m:.2} increase_pct={:.2}",
                    increase_pct(base, m)
                ));
            }
        }
    }
    Ok(out)
}

pub fn increase_pct(baseline: f64, value: f64) -> f64 {
    (value - baseline) / baseline * 100.0
}

/// Single robot placed at each distance.
pub fn distance_sweep(
    cfg: &ScenarioConfig,
    distances_m: &[f64],
) -> Result<ExperimentOutput, ExperimentError> {
    if distances_m.is_empty() {
        return Err(ExperimentError::EmptyList("distance"));
    }
    let jobs = distances_m
        .iter()
        .map(|&d| {
            let mut p = cfg.network_params();
            p.robot_count = 1;
            p.controlled_robots = 0;
            p.channel = p.channel.at_distance(d);
            Job {
                param: d,
                params: p,
            }
        })
        .collect();
    run_jobs("distance-sweep", jobs)
}

/// All `n` robots commanded round-robin; one row per robot.
pub fn multi_robot(
    cfg: &ScenarioConfig,
    counts: &[usize],
) -> Result<ExperimentOutput, ExperimentError> {
    if counts.is_empty() {
        return Err(ExperimentError::EmptyList("robot count"));
    }
    let jobs = counts
        .iter()
        .map(|&n| {
            let mut p = cfg.network_params();
            p.robot_count = n;
            p.controlled_robots = 0;
            Job {
                param: n as f64,
                params: p,
            }
        })
        .collect();
    run_jobs("multi-robot", jobs)
}

/// The configured scenario as-is; param is the send interval.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ExperimentOutput, ExperimentError> {
    cfg.validate()?;
    let jobs = seeds(cfg, 1)
        .map(|_| Job {
            param: cfg.send_interval_us as f64,
            params: cfg.network_params(),
        })
        .collect();
    run_jobs("run", jobs)
}
