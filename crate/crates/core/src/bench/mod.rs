//! Replicated experiments and their persistence.
//!
//! Every experiment is a pure function of its [`ExperimentConfig`]; replication
//! `r` uses the seed `seed ^ r` and named sub-streams derived from it, so the
//! output does not depend on the number of worker threads.

mod config;
mod experiments;
mod table;

use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{Experiment, ExperimentConfig, MethodId};
pub use experiments::{
    run_asymptotic_existence, run_eigenvalues, run_norm_convergence, run_sc_separation,
    sc_grid, sc_separating_node, EigenRow, ExistenceRow, NormRecord, NormSummary, ScResult,
};
pub use table::{
    run_benchmark, BenchmarkResult, CellSummary, ReplicationRecord, MAX_FAILURE_RATE,
};

pub use crate::cv::misclassification_rate;
use crate::error::{Error, Result};
use crate::procsim::write_atomic;

/// Files produced by one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub name: &'static str,
    /// Replication-level data; deterministic given the config.
    pub csv: String,
    /// Wall-clock timings, kept apart so the data file stays reproducible.
    pub timing_csv: Option<String>,
    pub summary: serde_json::Value,
}

/// Runs `f` on a dedicated pool of `jobs` worker threads.
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::numeric(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    match config.experiment {
        Experiment::Benchmark => Ok(run_benchmark(config)?.to_output(config)),
        Experiment::NormConvergence => experiments::norm_output(config),
        Experiment::Eigenvalues => experiments::eigen_output(config),
        Experiment::ScSeparation => experiments::sc_output(config),
        Experiment::AsymptoticExistence => experiments::existence_output(config),
    }
}

/// Writes `<name>_<stamp>.csv`, `.json` and, when present,
/// `<name>_<stamp>_timing.csv` into `dir`.
pub fn persist(output: &ExperimentOutput, dir: &Path, stamp: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let base = format!("{}_{stamp}", output.name);
    let mut written = Vec::new();
    let csv = dir.join(format!("{base}.csv"));
    write_atomic(&csv, output.csv.as_bytes())?;
    written.push(csv);
    let json = dir.join(format!("{base}.json"));
    let mut text = serde_json::to_string_pretty(&output.summary)?;
    text.push('\n');
    write_atomic(&json, text.as_bytes())?;
    written.push(json);
    if let Some(timing) = &output.timing_csv {
        let path = dir.join(format!("{base}_timing.csv"));
        write_atomic(&path, timing.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// Mean and sample standard deviation; `(NaN, NaN)` when empty.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub(crate) fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::numeric(format!("csv encoding failed: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::numeric(format!("csv encoding failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}
