use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_sd, to_csv, ExperimentConfig, ExperimentOutput};
use crate::error::{Error, Result};
use crate::firthglm::{detect_separation, DesignMatrix, SeparationStatus};
use crate::kernels::{eigendecompose, empirical_covariance, KernelSpec};
use crate::linalg;
use crate::procsim::{
    default_grid, gen_labels, make_dataset, DatasetGeneratorSpec, GeneratorId, GpSampler,
    LoeveFunctional, SlopeSpec,
};
use crate::rkhslogit::{fit_fixed, slope_error_norm};
use crate::seed;

// ---------------------------------------------------------------- norms

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub dataset: GeneratorId,
    pub p: usize,
    pub rep: usize,
    /// `None` when the fit failed.
    pub norm_sq: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormSummary {
    pub dataset: GeneratorId,
    pub p: usize,
    pub mean: f64,
    pub sd: f64,
    pub failures: usize,
}

/// `p` distinct grid nodes, each the node nearest a uniform draw on `[0, 1]`.
fn random_nodes(grid: &[f64], p: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed);
    let mut nodes = Vec::with_capacity(p);
    while nodes.len() < p {
        let j = linalg::nearest_node(grid, rng.random::<f64>());
        if !nodes.contains(&j) {
            nodes.push(j);
        }
    }
    nodes
}

fn truth_nodes(truth: &SlopeSpec, grid: &[f64]) -> Result<Vec<usize>> {
    match truth {
        SlopeSpec::Finite { points, .. } => {
            Ok(points.iter().map(|t| linalg::nearest_node(grid, *t)).collect())
        }
        SlopeSpec::Analytic { name, .. } => Err(Error::validation(format!(
            "slope `{name}` has no impact points"
        ))),
    }
}

/// Squared RKHS error of Firth fits at random points, per generator and `p`.
///
/// One sample of size `n` is drawn per (generator, replication) and reused
/// for every `p`.
pub fn run_norm_convergence(cfg: &ExperimentConfig) -> Result<(Vec<NormRecord>, Vec<NormSummary>)> {
    cfg.validate()?;
    let n = cfg.sample_size();
    let mut records = Vec::new();
    let mut summary = Vec::new();
    for id in cfg.generator_list() {
        let truth = id.truth();
        let kernel = id.kernel();
        let per_rep: Vec<Result<Vec<NormRecord>>> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let rep_seed = seed::replication_seed(cfg.seed, rep as u64);
                let data_seed = seed::derive(rep_seed, seed::tag(id.name()));
                let ds = make_dataset(&DatasetGeneratorSpec::new(id, n, cfg.grid_size, data_seed))?;
                let fixed = if cfg.truth_points {
                    Some(truth_nodes(&truth, ds.grid())?)
                } else {
                    None
                };
                Ok(cfg
                    .p_list
                    .iter()
                    .map(|&p| {
                        let nodes = match &fixed {
                            Some(t) => t.clone(),
                            None => random_nodes(ds.grid(), p, seed::derive(data_seed, p as u64)),
                        };
                        let norm = fit_fixed(&ds, &nodes)
                            .and_then(|m| slope_error_norm(&m, &truth, &kernel, ds.grid()));
                        if let Err(e) = &norm {
                            log::warn!("{id} p={p} replication {rep}: {e}");
                        }
                        NormRecord {
                            dataset: id,
                            p: if fixed.is_some() { nodes.len() } else { p },
                            rep,
                            norm_sq: norm.ok(),
                            seed: data_seed,
                        }
                    })
                    .collect())
            })
            .collect();
        let mut recs = Vec::new();
        for r in per_rep {
            recs.extend(r?);
        }
        let mut ps: Vec<usize> = recs.iter().map(|r| r.p).collect();
        ps.sort_unstable();
        ps.dedup();
        for p in ps {
            let values: Vec<f64> = recs.iter().filter(|r| r.p == p).filter_map(|r| r.norm_sq).collect();
            let total = recs.iter().filter(|r| r.p == p).count();
            let (mean, sd) = mean_sd(&values);
            summary.push(NormSummary {
                dataset: id,
                p,
                mean,
                sd,
                failures: total - values.len(),
            });
        }
        records.extend(recs);
    }
    Ok((records, summary))
}

pub(crate) fn norm_output(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (records, summary) = run_norm_convergence(cfg)?;
    #[derive(Serialize)]
    struct Row<'a> {
        experiment: &'a str,
        dataset: &'a str,
        p: usize,
        rep: usize,
        norm_sq: Option<f64>,
        seed: u64,
    }
    let rows: Vec<Row> = records
        .iter()
        .map(|r| Row {
            experiment: "norm_convergence",
            dataset: r.dataset.name(),
            p: r.p,
            rep: r.rep,
            norm_sq: r.norm_sq,
            seed: r.seed,
        })
        .collect();
    Ok(ExperimentOutput {
        name: "norm_convergence",
        csv: to_csv(&rows)?,
        timing_csv: None,
        summary: serde_json::json!({
            "experiment": "norm_convergence",
            "config": cfg,
            "cells": summary,
        }),
    })
}

// ---------------------------------------------------------- sign choice

/// Nodes `2^(-k / per_octave)` for `k = 1..=octaves * per_octave`, together
/// with the uniform grid of size `uniform`, sorted and deduplicated.
pub fn sc_grid(octaves: usize, per_octave: usize, uniform: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (1..=octaves * per_octave)
        .map(|k| (-(k as f64) / per_octave.max(1) as f64).exp2())
        .chain(default_grid(uniform))
        .filter(|t| *t > 0.0)
        .collect();
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// First column `j` at which every curve has the sign of its label
/// (positive for 1, negative for 0), strictly.
pub fn sc_separating_node(curves: &DMatrix<f64>, labels: &[u8]) -> Option<usize> {
    (0..curves.ncols()).find(|&j| {
        curves
            .column(j)
            .iter()
            .zip(labels)
            .all(|(x, y)| if *y == 1 { *x > 0.0 } else { *x < 0.0 })
    })
}

/// Brownian paths built from independent increments, exact at any depth.
fn brownian_paths(grid: &[f64], n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seed::rng(seed);
    let mut x = DMatrix::zeros(n, grid.len());
    for i in 0..n {
        let (mut prev_t, mut prev_x) = (0.0, 0.0);
        for (j, t) in grid.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            prev_x += (t - prev_t).sqrt() * z;
            prev_t = *t;
            x[(i, j)] = prev_x;
        }
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScResult {
    pub dataset: GeneratorId,
    pub n: usize,
    pub frequency: f64,
    /// Separating point per replication, if any.
    pub points: Vec<Option<f64>>,
    pub seeds: Vec<u64>,
}

/// Frequency with which centred curves with coin-flip labels admit a grid
/// point where every sign agrees with the label.
///
/// Brownian generators are simulated from increments on [`sc_grid`]; other
/// kernels go through a Cholesky factor of the same grid.
pub fn run_sc_separation(cfg: &ExperimentConfig) -> Result<Vec<ScResult>> {
    cfg.validate()?;
    let n = cfg.sample_size();
    let grid = sc_grid(cfg.octaves, cfg.per_octave, cfg.grid_size);
    let mut out = Vec::new();
    for id in cfg.generator_list() {
        let kernel = id.kernel();
        let sampler = match kernel {
            KernelSpec::BrownianMotion => None,
            _ => Some(GpSampler::new(&kernel, &grid)?),
        };
        let per_rep: Vec<(Option<f64>, u64)> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let rep_seed = seed::replication_seed(cfg.seed, rep as u64);
                let s = seed::derive(rep_seed, seed::tag(id.name()));
                let curves = match &sampler {
                    None => brownian_paths(&grid, n, s),
                    Some(g) => g.sample(n, s),
                };
                let mut rng = seed::rng(seed::derive(s, seed::tag("labels")));
                let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<bool>())).collect();
                (sc_separating_node(&curves, &labels).map(|j| grid[j]), s)
            })
            .collect();
        let hits = per_rep.iter().filter(|(p, _)| p.is_some()).count();
        out.push(ScResult {
            dataset: id,
            n,
            frequency: hits as f64 / cfg.replications as f64,
            points: per_rep.iter().map(|(p, _)| *p).collect(),
            seeds: per_rep.iter().map(|(_, s)| *s).collect(),
        });
    }
    Ok(out)
}

pub(crate) fn sc_output(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let results = run_sc_separation(cfg)?;
    #[derive(Serialize)]
    struct Row<'a> {
        experiment: &'a str,
        dataset: &'a str,
        n: usize,
        rep: usize,
        separated: bool,
        point: Option<f64>,
        seed: u64,
    }
    let mut rows = Vec::new();
    for r in &results {
        for (rep, (p, s)) in r.points.iter().zip(&r.seeds).enumerate() {
            rows.push(Row {
                experiment: "sc_separation",
                dataset: r.dataset.name(),
                n: r.n,
                rep,
                separated: p.is_some(),
                point: *p,
                seed: *s,
            });
        }
    }
    let cells: Vec<_> = results
        .iter()
        .map(|r| serde_json::json!({"dataset": r.dataset, "n": r.n, "frequency": r.frequency}))
        .collect();
    Ok(ExperimentOutput {
        name: "sc_separation",
        csv: to_csv(&rows)?,
        timing_csv: None,
        summary: serde_json::json!({"experiment": "sc_separation", "config": cfg, "cells": cells}),
    })
}

// ---------------------------------------------------- asymptotic existence

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistenceRow {
    pub dataset: GeneratorId,
    pub n: usize,
    pub p: usize,
    /// Share of replications with (quasi-)complete separation among those
    /// where the LP succeeded.
    pub frequency: f64,
    pub lp_failures: usize,
    /// Per replication; `None` when the LP failed.
    pub statuses: Vec<Option<SeparationStatus>>,
    pub seeds: Vec<u64>,
}

/// `p_n` for sample size `n`: `fixed_p`, else `round(kappa n)` (kappa
/// defaults to 0.6), at least 1 and at most `n`.
pub fn existence_dimension(cfg: &ExperimentConfig, n: usize) -> usize {
    match cfg.fixed_p {
        Some(p) => p,
        None => ((cfg.kappa.unwrap_or(0.6) * n as f64).round() as usize).clamp(1, n),
    }
}

/// Separation frequency of the finite logistic model at `T_n = {j / (p_n + 1)}`.
///
/// Curves live on the union of the uniform grid and `T_n`; labels come from
/// the generator's slope through the Loève functional on that union.
pub fn run_asymptotic_existence(cfg: &ExperimentConfig) -> Result<Vec<ExistenceRow>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for id in cfg.generator_list() {
        let kernel = id.kernel();
        let truth = id.truth();
        for &n in &cfg.n_schedule {
            let p = existence_dimension(cfg, n);
            let tn: Vec<f64> = (1..=p).map(|j| j as f64 / (p + 1) as f64).collect();
            let mut union: Vec<f64> = default_grid(cfg.grid_size).into_iter().chain(tn.iter().copied()).collect();
            union.sort_by(f64::total_cmp);
            union.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            let cols: Vec<usize> = tn.iter().map(|t| linalg::nearest_node(&union, *t)).collect();
            let sampler = GpSampler::new(&kernel, &union)?;
            let functional = LoeveFunctional::new(&truth, &union, &kernel)?;
            let per_rep: Vec<(Option<SeparationStatus>, u64)> = (0..cfg.replications)
                .into_par_iter()
                .map(|rep| {
                    let rep_seed = seed::replication_seed(cfg.seed, rep as u64);
                    let s = seed::derive(seed::derive(rep_seed, seed::tag(id.name())), n as u64);
                    let x = sampler.sample(n, s);
                    let eta = functional.apply_rows(&x);
                    let status = gen_labels(&eta, truth.intercept(), seed::derive(s, seed::tag("labels")))
                        .and_then(|y| DesignMatrix::from_features(&x.select_columns(&cols), y))
                        .and_then(|d| detect_separation(&d));
                    if let Err(e) = &status {
                        log::warn!("separation check failed for {id} n={n} replication {rep}: {e}");
                    }
                    (status.ok(), s)
                })
                .collect();
            let solved: Vec<SeparationStatus> = per_rep.iter().filter_map(|(s, _)| *s).collect();
            let separated = solved.iter().filter(|s| **s != SeparationStatus::None).count();
            out.push(ExistenceRow {
                dataset: id,
                n,
                p,
                frequency: if solved.is_empty() {
                    f64::NAN
                } else {
                    separated as f64 / solved.len() as f64
                },
                lp_failures: cfg.replications - solved.len(),
                statuses: per_rep.iter().map(|(s, _)| *s).collect(),
                seeds: per_rep.iter().map(|(_, s)| *s).collect(),
            });
        }
    }
    Ok(out)
}

pub(crate) fn existence_output(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let rows_in = run_asymptotic_existence(cfg)?;
    #[derive(Serialize)]
    struct Row<'a> {
        experiment: &'a str,
        dataset: &'a str,
        n: usize,
        p: usize,
        rep: usize,
        status: &'a str,
        seed: u64,
    }
    let mut rows = Vec::new();
    for r in &rows_in {
        for (rep, (st, s)) in r.statuses.iter().zip(&r.seeds).enumerate() {
            rows.push(Row {
                experiment: "asymptotic_existence",
                dataset: r.dataset.name(),
                n: r.n,
                p: r.p,
                rep,
                status: match st {
                    None => "lp_failed",
                    Some(SeparationStatus::None) => "none",
                    Some(SeparationStatus::Quasi) => "quasi",
                    Some(SeparationStatus::Complete) => "complete",
                },
                seed: *s,
            });
        }
    }
    let cells: Vec<_> = rows_in
        .iter()
        .map(|r| {
            serde_json::json!({
                "dataset": r.dataset, "n": r.n, "p": r.p,
                "frequency": r.frequency, "lp_failures": r.lp_failures,
            })
        })
        .collect();
    Ok(ExperimentOutput {
        name: "asymptotic_existence",
        csv: to_csv(&rows)?,
        timing_csv: None,
        summary: serde_json::json!({"experiment": "asymptotic_existence", "config": cfg, "cells": cells}),
    })
}

// ---------------------------------------------------------- eigenvalues

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenRow {
    pub dataset: GeneratorId,
    /// Leading eigenvalues of the empirical covariance operator, descending.
    pub eigenvalues: Vec<f64>,
}

pub fn run_eigenvalues(cfg: &ExperimentConfig) -> Result<Vec<EigenRow>> {
    cfg.validate()?;
    cfg.generator_list()
        .into_par_iter()
        .map(|id| {
            let s = seed::derive(cfg.seed, seed::tag(id.name()));
            let ds = make_dataset(&DatasetGeneratorSpec::new(id, cfg.sample_size(), cfg.grid_size, s))?;
            let spectrum = eigendecompose(&empirical_covariance(&ds)?, ds.grid())?;
            let eigenvalues = spectrum
                .values
                .iter()
                .take(cfg.eigen_count)
                .map(|v| v.max(0.0))
                .collect();
            Ok(EigenRow { dataset: id, eigenvalues })
        })
        .collect()
}

pub(crate) fn eigen_output(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let table = run_eigenvalues(cfg)?;
    #[derive(Serialize)]
    struct Row<'a> {
        experiment: &'a str,
        dataset: &'a str,
        k: usize,
        eigenvalue: f64,
    }
    let rows: Vec<Row> = table
        .iter()
        .flat_map(|r| {
            r.eigenvalues.iter().enumerate().map(|(k, v)| Row {
                experiment: "eigenvalues",
                dataset: r.dataset.name(),
                k: k + 1,
                eigenvalue: *v,
            })
        })
        .collect();
    Ok(ExperimentOutput {
        name: "eigenvalues",
        csv: to_csv(&rows)?,
        timing_csv: None,
        summary: serde_json::json!({"experiment": "eigenvalues", "config": cfg, "cells": table}),
    })
}
