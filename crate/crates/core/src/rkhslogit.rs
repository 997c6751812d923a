//! Point-selection estimators of the functional logistic model, slope
//! reconstruction and RKHS norms.
//!
//! A model keeps `p` impact points `t_j` and coefficients `β_j`; the slope is
//! `β(.) = Σ β_j K(t_j, .)` and the linear predictor of a curve is
//! `β_0 + Σ β_j x(t_j)`.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cv;
use crate::error::{Error, Result};
use crate::firthglm::{self, DesignMatrix, FitOptions, GlmFit};
use crate::kernels::{kernel_matrix, KernelSpec};
use crate::linalg;
use crate::procsim::{FunctionalDataset, SlopeSpec};
use crate::seed;

/// Largest number of impact points considered by default.
pub const DEFAULT_P_MAX: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sequential,
    MaxMax,
    /// Points given by the caller.
    Fixed,
}

/// Log-likelihoods recorded after each stage of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub p: usize,
    pub point: f64,
    pub loglik: f64,
    pub penalized_loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointModel {
    pub intercept: f64,
    /// Sorted by point.
    pub coefficients: Vec<f64>,
    pub points: Vec<f64>,
    pub method: Method,
    pub loglik: f64,
    pub penalized_loglik: f64,
    pub converged: bool,
    pub trace: Vec<TraceStep>,
}

impl PointModel {
    fn from_fit(
        dataset: &FunctionalDataset,
        nodes: &[usize],
        fit: &GlmFit,
        method: Method,
        trace: Vec<TraceStep>,
    ) -> PointModel {
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by_key(|k| nodes[*k]);
        PointModel {
            intercept: fit.coefficients[0],
            coefficients: order.iter().map(|k| fit.coefficients[k + 1]).collect(),
            points: order.iter().map(|k| dataset.grid()[nodes[*k]]).collect(),
            method,
            loglik: fit.loglik,
            penalized_loglik: fit.penalized_loglik,
            converged: fit.converged,
            trace,
        }
    }

    pub fn p(&self) -> usize {
        self.points.len()
    }

    /// `[β_0, β_1, ..., β_p]`.
    pub fn glm_coefficients(&self) -> Vec<f64> {
        std::iter::once(self.intercept)
            .chain(self.coefficients.iter().copied())
            .collect()
    }

    /// Grid nodes of `dataset` nearest to the model's points.
    pub fn nodes_in(&self, dataset: &FunctionalDataset) -> Vec<usize> {
        self.points.iter().map(|t| dataset.nearest_node(*t)).collect()
    }

    pub fn design(&self, dataset: &FunctionalDataset) -> Result<DesignMatrix> {
        DesignMatrix::from_dataset(dataset, &self.nodes_in(dataset))
    }

    pub fn predict_proba(&self, dataset: &FunctionalDataset) -> Result<Vec<f64>> {
        Ok(firthglm::predict_proba(
            &self.design(dataset)?,
            &self.glm_coefficients(),
        ))
    }

    /// Labels by `P(Y = 1 | x) > 1/2`.
    pub fn predict(&self, dataset: &FunctionalDataset) -> Result<Vec<u8>> {
        Ok(self
            .predict_proba(dataset)?
            .iter()
            .map(|p| u8::from(*p > 0.5))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<PointModel> {
        let m: PointModel = serde_json::from_str(text)?;
        if m.points.len() != m.coefficients.len() {
            return Err(Error::validation("model has mismatched points and coefficients"));
        }
        Ok(m)
    }
}

/// Grid nodes admissible as impact points: every node strictly above 0.
pub fn default_candidates(dataset: &FunctionalDataset) -> Vec<usize> {
    (0..dataset.m()).filter(|j| dataset.grid()[*j] > 0.0).collect()
}

/// Firth fit at caller-chosen grid nodes.
pub fn fit_fixed(dataset: &FunctionalDataset, nodes: &[usize]) -> Result<PointModel> {
    check_candidates(dataset, nodes)?;
    let mut sorted = nodes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != nodes.len() {
        return Err(Error::validation("repeated impact point"));
    }
    let fit = fit_at(dataset, nodes, None, &FitOptions::default())?;
    Ok(PointModel::from_fit(dataset, nodes, &fit, Method::Fixed, Vec::new()))
}

fn check_candidates(dataset: &FunctionalDataset, candidates: &[usize]) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::validation("empty candidate set"));
    }
    if let Some(bad) = candidates.iter().find(|j| **j >= dataset.m()) {
        return Err(Error::validation(format!("candidate node {bad} is off the grid")));
    }
    Ok(())
}

fn fit_at(
    dataset: &FunctionalDataset,
    nodes: &[usize],
    start: Option<&[f64]>,
    options: &FitOptions,
) -> Result<GlmFit> {
    let design = DesignMatrix::from_dataset(dataset, nodes)?;
    match start {
        Some(s) => firthglm::fit_firth_from(&design, s, options),
        None => firthglm::fit_firth(&design, options),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialOptions {
    pub p_max: usize,
    /// Stop early once a stage raises the log-likelihood by less than this.
    pub epsilon: Option<f64>,
    pub fit: FitOptions,
}

impl SequentialOptions {
    pub fn new(p_max: usize) -> Self {
        SequentialOptions {
            p_max,
            epsilon: None,
            fit: FitOptions::default(),
        }
    }

    /// The early-stopping threshold `1e-3 n`.
    pub fn default_epsilon(n: usize) -> f64 {
        1e-3 * n as f64
    }
}

/// Sequential fit with at most `p_max` points.
pub fn fit_sequential(
    dataset: &FunctionalDataset,
    p_max: usize,
    candidates: Option<&[usize]>,
) -> Result<PointModel> {
    let path = sequential_path(dataset, &SequentialOptions::new(p_max), candidates)?;
    Ok(path.into_iter().last().expect("path has at least one model"))
}

/// Models after each stage `1..=p_max` of the sequential search.
///
/// Stage `k` keeps the first `k - 1` points and scans every remaining
/// candidate for the one maximising the penalised log-likelihood; ties go to
/// the lowest node index.
pub fn sequential_path(
    dataset: &FunctionalDataset,
    options: &SequentialOptions,
    candidates: Option<&[usize]>,
) -> Result<Vec<PointModel>> {
    if options.p_max == 0 {
        return Err(Error::validation("p_max must be at least 1"));
    }
    let owned;
    let candidates = match candidates {
        Some(c) => c,
        None => {
            owned = default_candidates(dataset);
            &owned
        }
    };
    check_candidates(dataset, candidates)?;

    let mut chosen: Vec<usize> = Vec::new();
    let mut coef: Vec<f64> = vec![0.0];
    let mut trace = Vec::new();
    let mut path = Vec::new();
    for k in 1..=options.p_max {
        let pool: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|c| !chosen.contains(c))
            .collect();
        if pool.is_empty() {
            if k == 1 {
                return Err(Error::validation("empty candidate set"));
            }
            break;
        }
        let mut start = coef.clone();
        start.push(0.0);
        let fits: Vec<Option<GlmFit>> = pool
            .par_iter()
            .map(|c| {
                let mut nodes = chosen.clone();
                nodes.push(*c);
                fit_at(dataset, &nodes, Some(&start), &options.fit).ok()
            })
            .collect();
        let mut best: Option<(usize, GlmFit)> = None;
        for (c, fit) in pool.iter().zip(fits) {
            let Some(fit) = fit else { continue };
            if !fit.penalized_loglik.is_finite() {
                continue;
            }
            let better = match &best {
                None => true,
                Some((bc, bf)) => {
                    fit.penalized_loglik > bf.penalized_loglik
                        || (fit.penalized_loglik == bf.penalized_loglik && c < bc)
                }
            };
            if better {
                best = Some((*c, fit));
            }
        }
        let Some((node, fit)) = best else {
            return Err(Error::numeric(format!("no candidate could be fitted at stage {k}")));
        };
        let gain = fit.loglik - path.last().map_or(f64::NEG_INFINITY, |m: &PointModel| m.loglik);
        if let (Some(eps), true) = (options.epsilon, k > 1) {
            if gain < eps {
                break;
            }
        }
        chosen.push(node);
        coef = fit.coefficients.clone();
        trace.push(TraceStep {
            p: k,
            point: dataset.grid()[node],
            loglik: fit.loglik,
            penalized_loglik: fit.penalized_loglik,
        });
        path.push(PointModel::from_fit(
            dataset,
            &chosen,
            &fit,
            Method::Sequential,
            trace.clone(),
        ));
    }
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxMaxOptions {
    pub p: usize,
    pub restarts: usize,
    pub max_rounds: usize,
    pub seed: u64,
    pub fit: FitOptions,
}

impl MaxMaxOptions {
    pub fn new(p: usize, restarts: usize, seed: u64) -> Self {
        MaxMaxOptions {
            p,
            restarts,
            max_rounds: 50,
            seed,
            fit: FitOptions::default(),
        }
    }
}

pub fn fit_maxmax(
    dataset: &FunctionalDataset,
    p: usize,
    restarts: usize,
    max_rounds: usize,
    candidates: Option<&[usize]>,
    seed: u64,
) -> Result<PointModel> {
    let mut opts = MaxMaxOptions::new(p, restarts, seed);
    opts.max_rounds = max_rounds;
    let path = maxmax_path(dataset, &opts, candidates)?;
    Ok(path.into_iter().last().expect("path has at least one model"))
}

/// Best max-max model at each dimension `1..=p` over all restarts.
///
/// Restart `r` starts from entry `r` of a seeded permutation of the
/// candidates and grows the point set one random node at a time; after each
/// addition it alternates a cyclic grid search over single points at fixed
/// coefficients with a Firth refit at fixed points, until no point moves.
pub fn maxmax_path(
    dataset: &FunctionalDataset,
    options: &MaxMaxOptions,
    candidates: Option<&[usize]>,
) -> Result<Vec<PointModel>> {
    if options.p == 0 || options.restarts == 0 {
        return Err(Error::validation("max-max needs p >= 1 and restarts >= 1"));
    }
    let owned;
    let candidates = match candidates {
        Some(c) => c,
        None => {
            owned = default_candidates(dataset);
            &owned
        }
    };
    check_candidates(dataset, candidates)?;
    let p = options.p.min(candidates.len());

    let mut order = candidates.to_vec();
    order.shuffle(&mut seed::rng(seed::derive(options.seed, seed::tag("maxmax-order"))));

    let runs: Vec<Result<Vec<Sweep>>> = (0..options.restarts)
        .into_par_iter()
        .map(|r| maxmax_restart(dataset, candidates, order[r % order.len()], p, r as u64, options))
        .collect();

    let mut best: Vec<Option<(Vec<usize>, GlmFit, bool)>> = vec![None; p];
    let mut failures = 0;
    for run in runs {
        let Ok(run) = run else {
            failures += 1;
            continue;
        };
        for (k, state) in run.into_iter().enumerate() {
            let replace = match &best[k] {
                None => true,
                Some((_, f, _)) => state.1.penalized_loglik > f.penalized_loglik,
            };
            if replace {
                best[k] = Some(state);
            }
        }
    }
    if failures == options.restarts {
        return Err(Error::numeric("every max-max restart failed"));
    }
    let mut trace = Vec::new();
    let mut path = Vec::new();
    for (k, state) in best.into_iter().enumerate() {
        let Some((nodes, fit, settled)) = state else {
            break;
        };
        trace.push(TraceStep {
            p: k + 1,
            point: dataset.grid()[*nodes.last().expect("nonempty")],
            loglik: fit.loglik,
            penalized_loglik: fit.penalized_loglik,
        });
        let mut m = PointModel::from_fit(dataset, &nodes, &fit, Method::MaxMax, trace.clone());
        m.converged = fit.converged && settled;
        path.push(m);
    }
    Ok(path)
}

/// Settled indices, fit and convergence flag at one dimension.
type Sweep = (Vec<usize>, GlmFit, bool);

/// One restart; returns the settled state at each dimension.
fn maxmax_restart(
    dataset: &FunctionalDataset,
    candidates: &[usize],
    first: usize,
    p: usize,
    restart: u64,
    options: &MaxMaxOptions,
) -> Result<Vec<Sweep>> {
    let mut rng = seed::rng(seed::derive(options.seed, restart));
    let mut nodes = vec![first];
    let mut start = vec![0.0, 0.0];
    let mut out = Vec::with_capacity(p);
    loop {
        let mut fit = fit_at(dataset, &nodes, Some(&start), &options.fit)?;
        let mut settled = false;
        for _ in 0..options.max_rounds {
            if !coordinate_sweep(dataset, candidates, &mut nodes, &fit.coefficients)? {
                settled = true;
                break;
            }
            fit = fit_at(dataset, &nodes, Some(&fit.coefficients), &options.fit)?;
        }
        start = fit.coefficients.clone();
        out.push((nodes.clone(), fit, settled));
        if nodes.len() == p {
            return Ok(out);
        }
        let free: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|c| !nodes.contains(c))
            .collect();
        nodes.push(free[rng.random_range(0..free.len())]);
        start.push(0.0);
    }
}

/// Moves each point in turn to the candidate that most raises the penalised
/// log-likelihood at fixed coefficients. Returns whether anything moved.
fn coordinate_sweep(
    dataset: &FunctionalDataset,
    candidates: &[usize],
    nodes: &mut [usize],
    coefficients: &[f64],
) -> Result<bool> {
    let objective = |nodes: &[usize]| -> f64 {
        DesignMatrix::from_dataset(dataset, nodes)
            .and_then(|d| firthglm::penalized_log_likelihood(&d, coefficients))
            .unwrap_or(f64::NEG_INFINITY)
    };
    let mut current = objective(nodes);
    let mut moved = false;
    for j in 0..nodes.len() {
        let mut best = (current, nodes[j]);
        for &c in candidates {
            if nodes.contains(&c) {
                continue;
            }
            let mut trial = nodes.to_vec();
            trial[j] = c;
            let v = objective(&trial);
            if v > best.0 {
                best = (v, c);
            }
        }
        if best.1 != nodes[j] {
            nodes[j] = best.1;
            current = best.0;
            moved = true;
        }
    }
    Ok(moved)
}

/// Which estimator the cross-validation drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CvMethod {
    Sequential,
    MaxMax { restarts: usize, max_rounds: usize },
}

/// Path of models `p = 1..=p_max` for the chosen estimator.
pub fn fit_path(
    dataset: &FunctionalDataset,
    p_max: usize,
    method: CvMethod,
    seed: u64,
) -> Result<Vec<PointModel>> {
    match method {
        CvMethod::Sequential => sequential_path(dataset, &SequentialOptions::new(p_max), None),
        CvMethod::MaxMax {
            restarts,
            max_rounds,
        } => {
            let mut o = MaxMaxOptions::new(p_max, restarts, seed);
            o.max_rounds = max_rounds;
            maxmax_path(dataset, &o, None)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSelection {
    pub p: usize,
    /// Mean held-out misclassification for `p = 1..`.
    pub errors: Vec<f64>,
}

/// Chooses `p` by stratified `folds`-fold cross-validation; ties go to the
/// smaller `p`.
pub fn select_p_cv(
    dataset: &FunctionalDataset,
    p_max: usize,
    folds: usize,
    method: CvMethod,
    seed: u64,
) -> Result<CvSelection> {
    let assignment = cv::stratified_folds(dataset.labels(), folds, seed)?;
    let mut wrong = vec![0usize; p_max];
    let mut reach = p_max;
    for f in 0..folds {
        let (train_idx, test_idx) = cv::fold_split(&assignment, f);
        let train = dataset.subset(&train_idx);
        let test = dataset.subset(&test_idx);
        let path = fit_path(&train, p_max, method, seed::derive(seed, f as u64))?;
        reach = reach.min(path.len());
        for (k, model) in path.iter().enumerate() {
            let pred = model.predict(&test)?;
            wrong[k] += pred.iter().zip(test.labels()).filter(|(a, b)| a != b).count();
        }
    }
    let errors: Vec<f64> = wrong[..reach]
        .iter()
        .map(|w| *w as f64 / dataset.n() as f64)
        .collect();
    let mut p = 1;
    for (k, e) in errors.iter().enumerate() {
        if *e < errors[p - 1] {
            p = k + 1;
        }
    }
    Ok(CvSelection { p, errors })
}

/// `β(.) = Σ β_j K(t_j, .)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFunction {
    pub kernel: KernelSpec,
    pub coefficients: Vec<f64>,
    pub points: Vec<f64>,
}

impl SlopeFunction {
    pub fn eval(&self, s: f64) -> f64 {
        self.coefficients
            .iter()
            .zip(&self.points)
            .map(|(b, t)| b * self.kernel.eval(*t, s))
            .sum()
    }

    pub fn values(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|s| self.eval(*s)).collect()
    }

    /// Exact squared RKHS norm `a' Σ_T a`.
    pub fn norm_sq(&self) -> Result<f64> {
        span_norm_sq(&self.coefficients, &self.points, &self.kernel)
    }
}

pub fn reconstruct_slope(model: &PointModel, kernel: &KernelSpec) -> SlopeFunction {
    SlopeFunction {
        kernel: kernel.clone(),
        coefficients: model.coefficients.clone(),
        points: model.points.clone(),
    }
}

/// `a' Σ_T a` for `f = Σ a_j K(t_j, .)`.
pub fn span_norm_sq(coefficients: &[f64], points: &[f64], kernel: &KernelSpec) -> Result<f64> {
    if coefficients.len() != points.len() {
        return Err(Error::validation("one coefficient per point is required"));
    }
    if points.is_empty() {
        return Ok(0.0);
    }
    let k = kernel_matrix(kernel, points)?;
    let a = nalgebra::DVector::from_column_slice(coefficients);
    Ok((a.transpose() * &k.values * &a)[(0, 0)].max(0.0))
}

/// Grid estimate `f(S)' Σ_S^{-1} f(S)` of the squared RKHS norm.
pub fn rkhs_norm_sq(values: &[f64], kernel: &KernelSpec, grid: &[f64]) -> Result<f64> {
    if values.len() != grid.len() {
        return Err(Error::validation("values and grid lengths differ"));
    }
    let k = kernel_matrix(kernel, grid)?;
    let chol = linalg::cholesky_with_jitter(&k.values)?;
    let f = nalgebra::DVector::from_column_slice(values);
    Ok(f.dot(&chol.solve(&f)).max(0.0))
}

/// `||β̂ - β||²_K`. Finite truths are compared exactly in the span of the
/// kernel sections (truth points snapped to `grid`); analytic truths through
/// the grid quadratic form.
pub fn slope_error_norm(
    model: &PointModel,
    truth: &SlopeSpec,
    kernel: &KernelSpec,
    grid: &[f64],
) -> Result<f64> {
    truth.validate()?;
    match truth {
        SlopeSpec::Finite {
            coefficients,
            points,
            ..
        } => {
            let mut merged: Vec<(f64, f64)> = model
                .points
                .iter()
                .copied()
                .zip(model.coefficients.iter().copied())
                .collect();
            for (t, b) in points.iter().zip(coefficients) {
                let snapped = grid[linalg::nearest_node(grid, *t)];
                match merged.iter_mut().find(|(u, _)| *u == snapped) {
                    Some(entry) => entry.1 -= b,
                    None => merged.push((snapped, -b)),
                }
            }
            let (pts, coefs): (Vec<f64>, Vec<f64>) = merged.into_iter().unzip();
            span_norm_sq(&coefs, &pts, kernel)
        }
        SlopeSpec::Analytic { .. } => {
            let slope = reconstruct_slope(model, kernel);
            let diff: Vec<f64> = grid
                .iter()
                .map(|s| slope.eval(*s) - truth.eval(kernel, *s))
                .collect();
            rkhs_norm_sq(&diff, kernel, grid)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesError {
    pub value: f64,
    /// The intercept was positive and the value was clamped to 1/2.
    pub clamped: bool,
}

/// `Φ(-sqrt(-β_0 / 2))`.
pub fn bayes_error_estimate(intercept: f64) -> BayesError {
    if intercept > 0.0 || intercept.is_nan() {
        return BayesError {
            value: 0.5,
            clamped: true,
        };
    }
    let phi = Normal::standard();
    BayesError {
        value: phi.cdf(-(-intercept / 2.0).sqrt()),
        clamped: false,
    }
}
