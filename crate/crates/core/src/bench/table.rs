use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_sd, to_csv, ExperimentConfig, ExperimentOutput, MethodId};
use crate::baselines::{
    PcaBackend, PcaClassifier, RkvsBackend, RkvsClassifier, PCA_MAX_COMPONENTS,
};
use crate::cv::misclassification_rate;
use crate::error::{Error, Result};
use crate::procsim::{make_dataset, DatasetGeneratorSpec, FunctionalDataset, GeneratorId};
use crate::rkhslogit::{fit_path, select_p_cv, CvMethod, PointModel};
use crate::seed;

/// Cells with a larger share of failed replications abort the run.
pub const MAX_FAILURE_RATE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub dataset: GeneratorId,
    pub method: MethodId,
    pub rep: usize,
    pub seed: u64,
    /// `None` when the method failed on this replication.
    pub error: Option<f64>,
    pub train_seconds: f64,
    pub test_seconds: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub dataset: GeneratorId,
    pub method: MethodId,
    pub replications: usize,
    pub failures: usize,
    pub mean_error: f64,
    pub sd_error: f64,
    pub mean_train_seconds: f64,
    pub mean_test_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub cells: Vec<CellSummary>,
    pub records: Vec<ReplicationRecord>,
}

impl BenchmarkResult {
    pub fn cell(&self, dataset: GeneratorId, method: MethodId) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.dataset == dataset && c.method == method)
    }

    pub(crate) fn to_output(&self, config: &ExperimentConfig) -> ExperimentOutput {
        #[derive(Serialize)]
        struct Row<'a> {
            experiment: &'a str,
            dataset: &'a str,
            method: &'a str,
            rep: usize,
            error: Option<f64>,
            seed: u64,
        }
        #[derive(Serialize)]
        struct Timing<'a> {
            dataset: &'a str,
            method: &'a str,
            rep: usize,
            train_seconds: f64,
            test_seconds: f64,
        }
        let rows: Vec<Row> = self
            .records
            .iter()
            .map(|r| Row {
                experiment: "benchmark",
                dataset: r.dataset.name(),
                method: r.method.name(),
                rep: r.rep,
                error: r.error,
                seed: r.seed,
            })
            .collect();
        let timing: Vec<Timing> = self
            .records
            .iter()
            .map(|r| Timing {
                dataset: r.dataset.name(),
                method: r.method.name(),
                rep: r.rep,
                train_seconds: r.train_seconds,
                test_seconds: r.test_seconds,
            })
            .collect();
        ExperimentOutput {
            name: "benchmark",
            csv: to_csv(&rows).expect("plain rows encode"),
            timing_csv: Some(to_csv(&timing).expect("plain rows encode")),
            summary: serde_json::json!({
                "experiment": "benchmark",
                "config": config,
                "cells": self.cells,
            }),
        }
    }
}

enum Trained {
    Points(PointModel),
    Pca(PcaClassifier),
    Knn(FunctionalDataset),
    Rkvs(RkvsClassifier),
}

fn train(method: MethodId, data: &FunctionalDataset, cfg: &ExperimentConfig, seed: u64) -> Result<Trained> {
    let points = |cv: CvMethod| -> Result<Trained> {
        let sel = select_p_cv(data, cfg.p_max, cfg.folds, cv, seed)?;
        let path = fit_path(data, sel.p, cv, seed::derive(seed, u64::MAX))?;
        let model = path.into_iter().last().expect("non-empty path");
        Ok(Trained::Points(model))
    };
    match method {
        MethodId::RkhsSq => points(CvMethod::Sequential),
        MethodId::RkhsMm => points(CvMethod::MaxMax {
            restarts: cfg.restarts,
            max_rounds: cfg.max_rounds,
        }),
        MethodId::Pca => Ok(Trained::Pca(PcaClassifier::fit(
            data,
            PCA_MAX_COMPONENTS,
            PcaBackend::Logistic,
            cfg.folds,
            seed,
        )?)),
        MethodId::PcaKnn => Ok(Trained::Pca(PcaClassifier::fit(
            data,
            PCA_MAX_COMPONENTS,
            PcaBackend::Knn { k: 5 },
            cfg.folds,
            seed,
        )?)),
        MethodId::Knn5 => Ok(Trained::Knn(data.clone())),
        MethodId::Rk => Ok(Trained::Rkvs(RkvsClassifier::fit(
            data,
            cfg.p_max,
            RkvsBackend::Lda,
            cfg.folds,
            seed,
        )?)),
        MethodId::RkKnn => Ok(Trained::Rkvs(RkvsClassifier::fit(
            data,
            cfg.p_max,
            RkvsBackend::Knn,
            cfg.folds,
            seed,
        )?)),
    }
}

fn predict(model: &Trained, test: &FunctionalDataset) -> Result<Vec<u8>> {
    match model {
        Trained::Points(m) => m.predict(test),
        Trained::Pca(c) => c.predict(test),
        Trained::Knn(train) => crate::baselines::classify_knn(train, test, 5),
        Trained::Rkvs(c) => c.predict(test),
    }
}

/// Train/test split of replication `rep` for `id`.
pub(crate) fn benchmark_split(
    cfg: &ExperimentConfig,
    id: GeneratorId,
    rep: usize,
) -> Result<(u64, FunctionalDataset, FunctionalDataset)> {
    let rep_seed = seed::replication_seed(cfg.seed, rep as u64);
    let data_seed = seed::derive(rep_seed, seed::tag(id.name()));
    let spec = DatasetGeneratorSpec::new(id, cfg.n_train + cfg.n_test, cfg.grid_size, data_seed);
    let mut ds = make_dataset(&spec)?;
    if cfg.shuffle_labels {
        let mut labels = ds.labels().to_vec();
        labels.shuffle(&mut seed::rng(seed::derive(data_seed, seed::tag("shuffle"))));
        ds = ds.with_labels(labels)?;
    }
    let (tr, te) = ds.split_at(cfg.n_train)?;
    Ok((data_seed, tr, te))
}

fn run_one(
    cfg: &ExperimentConfig,
    id: GeneratorId,
    methods: &[MethodId],
    rep: usize,
) -> Vec<ReplicationRecord> {
    let split = benchmark_split(cfg, id, rep);
    methods
        .iter()
        .map(|&method| {
            let mut rec = ReplicationRecord {
                dataset: id,
                method,
                rep,
                seed: 0,
                error: None,
                train_seconds: 0.0,
                test_seconds: 0.0,
                failure: None,
            };
            let (data_seed, tr, te) = match &split {
                Ok(s) => s,
                Err(e) => {
                    rec.failure = Some(e.to_string());
                    return rec;
                }
            };
            rec.seed = *data_seed;
            let method_seed = seed::derive(*data_seed, seed::tag(method.name()));
            let t0 = Instant::now();
            let trained = train(method, tr, cfg, method_seed);
            rec.train_seconds = t0.elapsed().as_secs_f64();
            let outcome = trained.and_then(|m| {
                let t1 = Instant::now();
                let pred = predict(&m, te);
                rec.test_seconds = t1.elapsed().as_secs_f64();
                misclassification_rate(&pred?, te.labels())
            });
            match outcome {
                Ok(e) => rec.error = Some(e),
                Err(e) => {
                    log::warn!("{method} failed on {id} replication {rep}: {e}");
                    rec.failure = Some(e.to_string());
                }
            }
            rec
        })
        .collect()
}

/// Replicated train/test errors for every (generator, method) cell.
///
/// Replications run in parallel on the current rayon pool; results are
/// collected in replication order.
pub fn run_benchmark(config: &ExperimentConfig) -> Result<BenchmarkResult> {
    config.validate()?;
    let generators = config.generator_list();
    let methods = config.method_list();
    let mut records = Vec::new();
    let mut cells = Vec::new();
    for id in generators {
        let per_rep: Vec<Vec<ReplicationRecord>> = (0..config.replications)
            .into_par_iter()
            .map(|rep| run_one(config, id, &methods, rep))
            .collect();
        let per_rep: Vec<ReplicationRecord> = per_rep.into_iter().flatten().collect();
        for &method in &methods {
            let recs: Vec<&ReplicationRecord> =
                per_rep.iter().filter(|r| r.method == method).collect();
            let failures = recs.iter().filter(|r| r.error.is_none()).count();
            if failures as f64 > MAX_FAILURE_RATE * config.replications as f64 {
                let seeds: Vec<String> = recs
                    .iter()
                    .filter(|r| r.error.is_none())
                    .map(|r| format!("rep {} ({})", r.rep, r.failure.as_deref().unwrap_or("?")))
                    .collect();
                return Err(Error::numeric(format!(
                    "{method} failed on {failures}/{} replications of {id}: {}",
                    config.replications,
                    seeds.join("; ")
                )));
            }
            let errors: Vec<f64> = recs.iter().filter_map(|r| r.error).collect();
            let (mean_error, sd_error) = mean_sd(&errors);
            let ok = errors.len().max(1) as f64;
            cells.push(CellSummary {
                dataset: id,
                method,
                replications: config.replications,
                failures,
                mean_error,
                sd_error,
                mean_train_seconds: recs.iter().filter(|r| r.error.is_some()).map(|r| r.train_seconds).sum::<f64>() / ok,
                mean_test_seconds: recs.iter().filter(|r| r.error.is_some()).map(|r| r.test_seconds).sum::<f64>() / ok,
            });
        }
        records.extend(per_rep);
    }
    Ok(BenchmarkResult { cells, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{with_jobs, Experiment};

    fn small(methods: Vec<MethodId>) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(Experiment::Benchmark, 11);
        c.generators = vec![GeneratorId::BmFin];
        c.methods = methods;
        c.n_train = 60;
        c.n_test = 30;
        c.replications = 3;
        c.grid_size = 21;
        c.p_max = 3;
        c.folds = 3;
        c.restarts = 2;
        c
    }

    #[test]
    fn every_method_runs() {
        let r = run_benchmark(&small(MethodId::ALL.to_vec())).unwrap();
        assert_eq!(r.records.len(), 3 * MethodId::ALL.len());
        assert_eq!(r.cells.len(), MethodId::ALL.len());
        for c in &r.cells {
            assert_eq!(c.failures, 0, "{}", c.method);
            assert!((0.0..=1.0).contains(&c.mean_error));
        }
    }

    #[test]
    fn data_output_ignores_thread_count() {
        let cfg = small(vec![MethodId::RkhsSq, MethodId::Knn5]);
        let a = with_jobs(1, || run_benchmark(&cfg)).unwrap().unwrap();
        let b = with_jobs(3, || run_benchmark(&cfg)).unwrap().unwrap();
        assert_eq!(a.to_output(&cfg).csv, b.to_output(&cfg).csv);
        let csv = a.to_output(&cfg).csv;
        assert!(csv.starts_with("experiment,dataset,method,rep,error,seed\n"));
        assert_eq!(csv.lines().count(), 1 + 6);
    }

    #[test]
    fn shuffled_labels_keep_curves() {
        let mut cfg = small(vec![]);
        let (_, a, _) = benchmark_split(&cfg, GeneratorId::BmFin, 0).unwrap();
        cfg.shuffle_labels = true;
        let (_, b, _) = benchmark_split(&cfg, GeneratorId::BmFin, 0).unwrap();
        assert_eq!(a.curves(), b.curves());
        assert_ne!(a.labels(), b.labels());
    }
}
