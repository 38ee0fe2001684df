//! Runs the selected observers of one scenario in parallel and writes their
//! artifacts.

use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use se3obs_core::observers::Variant;
use se3obs_core::sim::{monitors, run_prepared, Scenario};
use se3obs_core::Error;

use crate::output::{write_csv, write_json, ErrorRecord, ObserverSummary, Summary};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SE3_OBS_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Setup(Error),
    #[error("{observer}: {source}")]
    Observer { observer: Variant, source: Error },
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    Pool(String),
}

impl RunError {
    pub fn record(&self) -> ErrorRecord {
        let (kind, observer, t, j) = match self {
            RunError::Setup(_) => ("setup", None, None, None),
            RunError::Observer {
                observer,
                source: Error::DivergenceDetected { t, j, .. },
            } => ("divergence", Some(observer.name().to_string()), Some(*t), Some(*j)),
            RunError::Observer { observer, .. } => ("observer", Some(observer.name().to_string()), None, None),
            RunError::Io { .. } => ("io", None, None, None),
            RunError::Pool(_) => ("pool", None, None, None),
        };
        ErrorRecord {
            kind: kind.to_string(),
            message: self.to_string(),
            observer,
            t: t.filter(|x| x.is_finite()),
            j,
        }
    }
}

/// Worker count: one per observer, capped by `SE3_OBS_THREADS` when set.
pub fn worker_count(observers: usize) -> usize {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    match cap {
        Some(c) => observers.min(c).max(1),
        None => observers.max(1),
    }
}

/// Runs every observer, writes `<name>.csv` per observer and
/// `summary.json`. On failure `error.json` is written instead of the summary
/// and the first error is returned.
pub fn simulate(
    scenario: &Scenario,
    observers: &[Variant],
    out_dir: &Path,
    config_name: &str,
) -> Result<Summary, RunError> {
    let outcome = simulate_inner(scenario, observers, out_dir, config_name);
    if let Err(e) = &outcome {
        let path = out_dir.join("error.json");
        if let Err(io) = std::fs::create_dir_all(out_dir).and_then(|_| write_json(&path, &e.record())) {
            warn!("could not write {}: {io}", path.display());
        }
    }
    outcome
}

fn simulate_inner(
    scenario: &Scenario,
    observers: &[Variant],
    out_dir: &Path,
    config_name: &str,
) -> Result<Summary, RunError> {
    let setup = scenario.prepare().map_err(RunError::Setup)?;
    if setup.jump_set.boundary_warning {
        warn!("delta sits on the feasibility bound {}", setup.jump_set.bound);
    }
    std::fs::create_dir_all(out_dir).map_err(|source| RunError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(observers.len()))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;

    let results: Vec<Result<ObserverSummary, RunError>> = pool.install(|| {
        observers
            .par_iter()
            .map(|&v| {
                let log = run_prepared(scenario, &setup, v).map_err(|source| RunError::Observer {
                    observer: v,
                    source,
                })?;
                let name = format!("{}.csv", v.name());
                let path = out_dir.join(&name);
                write_csv(&path, &log).map_err(|source| RunError::Io { path, source })?;
                let diag = monitors(&log, None);
                info!(
                    "{v}: {} jumps, final |g|_I = {:.3e}, {:.2} s",
                    log.jumps.len(),
                    log.last().dist_gi,
                    log.wall_time
                );
                Ok(ObserverSummary::new(&log, &diag, &name))
            })
            .collect()
    });
    let observers = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let summary = Summary {
        config: config_name.to_string(),
        seed: scenario.seed,
        delta: setup.jump_set.delta,
        delta_star: setup.jump_set.delta_star,
        gap_bound: setup.jump_set.bound,
        boundary_warning: setup.jump_set.boundary_warning,
        observers,
    };
    let path = out_dir.join("summary.json");
    write_json(&path, &summary).map_err(|source| RunError::Io { path, source })?;
    Ok(summary)
}
