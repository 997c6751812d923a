//! Reference classifiers: functional PCA followed by logistic regression or
//! k-nearest neighbours, plain functional knn, and Mahalanobis variable
//! selection with LDA or knn on the selected coordinates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cv;
use crate::error::{Error, Result};
use crate::firthglm::{self, DesignMatrix, FitOptions};
use crate::kernels::{covariance_matrix, symmetric_spectrum};
use crate::linalg;
use crate::procsim::FunctionalDataset;

/// Largest number of principal components tried by the PCA methods.
pub const PCA_MAX_COMPONENTS: usize = 30;
/// Largest number of selected points tried by RK-VS.
pub const RKVS_MAX_POINTS: usize = 10;

/// Functional principal components under the quadrature inner product
/// `<f, g> = Δ Σ f(s_j) g(s_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub mean: DVector<f64>,
    /// `m × d`, orthonormal under the quadrature inner product.
    pub components: DMatrix<f64>,
    /// Leading `d` eigenvalues of the covariance operator, descending.
    pub eigenvalues: Vec<f64>,
    /// Sum of all eigenvalues.
    pub total_variance: f64,
    pub delta: f64,
}

impl PcaBasis {
    pub fn d(&self) -> usize {
        self.components.ncols()
    }

    /// Curves rebuilt from the first `scores.ncols()` components.
    pub fn reconstruct(&self, scores: &DMatrix<f64>) -> DMatrix<f64> {
        let d = scores.ncols();
        let mut x = scores * self.components.columns(0, d).transpose();
        for mut row in x.row_iter_mut() {
            row += self.mean.transpose();
        }
        x
    }
}

pub fn fit_pca(dataset: &FunctionalDataset, d: usize) -> Result<PcaBasis> {
    let (n, m) = (dataset.n(), dataset.m());
    if d == 0 || d > n.min(m) {
        return Err(Error::validation(format!(
            "cannot keep {d} components from {n} curves on {m} nodes"
        )));
    }
    let delta = linalg::grid_spacing(dataset.grid())?;
    let cov = covariance_matrix(dataset.curves())?;
    let spectrum = symmetric_spectrum(cov * delta);
    let scale = 1.0 / delta.sqrt();
    let components = spectrum.vectors.columns(0, d).map(|v| v * scale);
    let mean = DVector::from_iterator(m, dataset.curves().column_iter().map(|c| c.mean()));
    Ok(PcaBasis {
        mean,
        components,
        eigenvalues: spectrum.values[..d].iter().map(|v| v.max(0.0)).collect(),
        total_variance: spectrum.values.iter().sum(),
        delta,
    })
}

/// `n × d` scores `Δ Σ_j (x(s_j) - x̄(s_j)) φ_k(s_j)`.
pub fn project(dataset: &FunctionalDataset, basis: &PcaBasis) -> Result<DMatrix<f64>> {
    if dataset.m() != basis.mean.len() {
        return Err(Error::validation("dataset grid does not match the basis"));
    }
    let mut centred = dataset.curves().clone();
    for mut row in centred.row_iter_mut() {
        row -= basis.mean.transpose();
    }
    Ok(centred * &basis.components * basis.delta)
}

/// Majority vote among the `k` nearest rows of `train` under
/// Euclidean distance. Vote ties go to the label whose
/// neighbours are nearer on average, then to 0.
pub fn knn_predict(
    train: &DMatrix<f64>,
    labels: &[u8],
    test: &DMatrix<f64>,
    k: usize,
) -> Result<Vec<u8>> {
    if k == 0 || k > train.nrows() {
        return Err(Error::validation(format!(
            "k = {k} with {} training samples",
            train.nrows()
        )));
    }
    if train.ncols() != test.ncols() || labels.len() != train.nrows() {
        return Err(Error::validation("knn inputs have inconsistent shapes"));
    }
    Ok(test
        .row_iter()
        .map(|q| {
            let mut d: Vec<(f64, usize)> = train
                .row_iter()
                .enumerate()
                .map(|(i, r)| ((r - q).norm_squared(), i))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut votes = [0usize; 2];
            let mut dist = [0.0f64; 2];
            for (dd, i) in &d[..k] {
                let y = labels[*i] as usize;
                votes[y] += 1;
                dist[y] += dd.sqrt();
            }
            if votes[1] != votes[0] {
                u8::from(votes[1] > votes[0])
            } else {
                u8::from(dist[1] / (votes[1] as f64) < dist[0] / (votes[0] as f64))
            }
        })
        .collect())
}

/// Functional knn with the quadrature L² distance on the grid.
pub fn classify_knn(
    train: &FunctionalDataset,
    test: &FunctionalDataset,
    k: usize,
) -> Result<Vec<u8>> {
    check_grids(train, test)?;
    // a common positive factor does not change the neighbour order
    knn_predict(train.curves(), train.labels(), test.curves(), k)
}

fn check_grids(train: &FunctionalDataset, test: &FunctionalDataset) -> Result<()> {
    if train.grid() != test.grid() {
        return Err(Error::validation("train and test grids differ"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaBackend {
    Logistic,
    Knn { k: usize },
}

/// PCA scores followed by a classifier on the leading components.
#[derive(Debug, Clone)]
pub struct PcaClassifier {
    basis: PcaBasis,
    backend: PcaBackend,
    train_scores: DMatrix<f64>,
    labels: Vec<u8>,
    /// Firth coefficients of the logistic backend.
    coefficients: Option<Vec<f64>>,
}

impl PcaClassifier {
    /// Keeps the leading `d` components of `basis` and fits the backend.
    pub fn with_basis(
        train: &FunctionalDataset,
        basis: &PcaBasis,
        d: usize,
        backend: PcaBackend,
    ) -> Result<Self> {
        if d == 0 || d > basis.d() {
            return Err(Error::validation(format!("{d} of {} components", basis.d())));
        }
        let basis = PcaBasis {
            mean: basis.mean.clone(),
            components: basis.components.columns(0, d).into_owned(),
            eigenvalues: basis.eigenvalues[..d].to_vec(),
            total_variance: basis.total_variance,
            delta: basis.delta,
        };
        let train_scores = project(train, &basis)?;
        let coefficients = match backend {
            PcaBackend::Logistic => {
                let design = DesignMatrix::from_features(&train_scores, train.labels().to_vec())?;
                Some(firthglm::fit_firth(&design, &FitOptions::default())?.coefficients)
            }
            PcaBackend::Knn { .. } => None,
        };
        Ok(PcaClassifier {
            basis,
            backend,
            train_scores,
            labels: train.labels().to_vec(),
            coefficients,
        })
    }

    /// Number of components `d ≤ d_max` chosen by cross-validation.
    pub fn fit(
        train: &FunctionalDataset,
        d_max: usize,
        backend: PcaBackend,
        folds: usize,
        seed: u64,
    ) -> Result<Self> {
        let cap = |ds: &FunctionalDataset| d_max.min(ds.n().min(ds.m()));
        let d = cv_dimension(train, d_max, folds, seed, |fit_part, held, d_max| {
            let basis = fit_pca(fit_part, d_max.min(cap(fit_part)))?;
            (1..=basis.d())
                .map(|d| PcaClassifier::with_basis(fit_part, &basis, d, backend)?.predict(held))
                .collect()
        })?;
        let basis = fit_pca(train, d.min(cap(train)))?;
        PcaClassifier::with_basis(train, &basis, basis.d(), backend)
    }

    pub fn d(&self) -> usize {
        self.basis.d()
    }

    pub fn predict(&self, test: &FunctionalDataset) -> Result<Vec<u8>> {
        let scores = project(test, &self.basis)?;
        match (self.backend, &self.coefficients) {
            (PcaBackend::Logistic, Some(coef)) => {
                let design = DesignMatrix::from_features(&scores, vec![0; scores.nrows()])?;
                Ok(firthglm::predict_proba(&design, coef)
                    .iter()
                    .map(|p| u8::from(*p > 0.5))
                    .collect())
            }
            (PcaBackend::Knn { k }, _) => knn_predict(&self.train_scores, &self.labels, &scores, k),
            (PcaBackend::Logistic, None) => unreachable!("logistic backend is always fitted"),
        }
    }
}

/// Held-out error of each `d = 1..` over stratified folds, then the
/// smallest minimiser.
fn cv_dimension(
    train: &FunctionalDataset,
    d_max: usize,
    folds: usize,
    seed: u64,
    errors_at: impl Fn(&FunctionalDataset, &FunctionalDataset, usize) -> Result<Vec<Vec<u8>>>,
) -> Result<usize> {
    let assignment = cv::stratified_folds(train.labels(), folds, seed)?;
    let mut wrong = vec![0usize; d_max];
    let mut reach = d_max;
    for f in 0..folds {
        let (a, b) = cv::fold_split(&assignment, f);
        let (fit_part, held) = (train.subset(&a), train.subset(&b));
        let preds = errors_at(&fit_part, &held, d_max)?;
        reach = reach.min(preds.len());
        for (d, pred) in preds.iter().enumerate() {
            wrong[d] += pred.iter().zip(held.labels()).filter(|(u, v)| u != v).count();
        }
    }
    if reach == 0 {
        return Err(Error::numeric("no dimension could be evaluated"));
    }
    let mut best = 0;
    for d in 1..reach {
        if wrong[d] < wrong[best] {
            best = d;
        }
    }
    Ok(best + 1)
}

/// PCA with `d ≤ d_max` chosen by cross-validation, then the backend on
/// the leading `d` scores.
pub fn classify_pca(
    train: &FunctionalDataset,
    test: &FunctionalDataset,
    d_max: usize,
    backend: PcaBackend,
    folds: usize,
    seed: u64,
) -> Result<Vec<u8>> {
    check_grids(train, test)?;
    PcaClassifier::fit(train, d_max, backend, folds, seed)?.predict(test)
}

pub fn classify_pca_logistic(
    train: &FunctionalDataset,
    test: &FunctionalDataset,
    folds: usize,
    seed: u64,
) -> Result<Vec<u8>> {
    classify_pca(train, test, PCA_MAX_COMPONENTS, PcaBackend::Logistic, folds, seed)
}

pub fn classify_pca_knn(
    train: &FunctionalDataset,
    test: &FunctionalDataset,
    folds: usize,
    seed: u64,
) -> Result<Vec<u8>> {
    classify_pca(train, test, PCA_MAX_COMPONENTS, PcaBackend::Knn { k: 5 }, folds, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RkvsSelection {
    /// Grid nodes in selection order.
    pub nodes: Vec<usize>,
    pub points: Vec<f64>,
    /// Statistic after each greedy step.
    pub path_scores: Vec<f64>,
    pub score: f64,
}

struct ClassMoments {
    m0: DVector<f64>,
    m1: DVector<f64>,
    pooled: DMatrix<f64>,
    n0: usize,
    n1: usize,
}

fn class_moments(dataset: &FunctionalDataset) -> Result<ClassMoments> {
    let (n0, n1) = dataset.class_counts();
    if n0 < 1 || n1 < 1 || dataset.n() < 3 {
        return Err(Error::validation(
            "RK-VS needs both classes and at least 3 samples",
        ));
    }
    let m = dataset.m();
    let mut means = [DVector::zeros(m), DVector::zeros(m)];
    for (i, y) in dataset.labels().iter().enumerate() {
        means[*y as usize] += dataset.curves().row(i).transpose();
    }
    means[0] /= n0 as f64;
    means[1] /= n1 as f64;
    let mut pooled = DMatrix::zeros(m, m);
    for (i, y) in dataset.labels().iter().enumerate() {
        let r = dataset.curves().row(i).transpose() - &means[*y as usize];
        pooled.ger(1.0, &r, &r, 1.0);
    }
    pooled /= (dataset.n() - 2).max(1) as f64;
    let [m0, m1] = means;
    Ok(ClassMoments {
        m0,
        m1,
        pooled,
        n0,
        n1,
    })
}

fn mahalanobis(mom: &ClassMoments, nodes: &[usize]) -> Option<f64> {
    let sigma = mom.pooled.select_rows(nodes).select_columns(nodes);
    let chol = linalg::cholesky_with_jitter(&sigma).ok()?;
    let diff = DVector::from_iterator(nodes.len(), nodes.iter().map(|j| mom.m1[*j] - mom.m0[*j]));
    let v = diff.dot(&chol.solve(&diff));
    v.is_finite().then_some(v)
}

/// Greedy forward selection of `p` nodes maximising
/// `(m̂1 - m̂0)' Σ̂_T^{-1} (m̂1 - m̂0)` with the pooled within-class covariance.
pub fn rkvs_select(dataset: &FunctionalDataset, p: usize) -> Result<RkvsSelection> {
    if p == 0 || p > dataset.m() {
        return Err(Error::validation(format!("cannot select {p} of {} nodes", dataset.m())));
    }
    let mom = class_moments(dataset)?;
    let mut nodes: Vec<usize> = Vec::with_capacity(p);
    let mut path_scores = Vec::with_capacity(p);
    for _ in 0..p {
        let mut best: Option<(f64, usize)> = None;
        for c in 0..dataset.m() {
            if nodes.contains(&c) {
                continue;
            }
            let mut trial = nodes.clone();
            trial.push(c);
            // singular candidates are skipped
            let Some(v) = mahalanobis(&mom, &trial) else {
                continue;
            };
            if best.is_none_or(|(b, _)| v > b) {
                best = Some((v, c));
            }
        }
        let Some((v, c)) = best else {
            break;
        };
        nodes.push(c);
        path_scores.push(v);
    }
    if nodes.is_empty() {
        return Err(Error::numeric("no node gives an invertible covariance"));
    }
    Ok(RkvsSelection {
        points: nodes.iter().map(|j| dataset.grid()[*j]).collect(),
        score: *path_scores.last().expect("nonempty"),
        nodes,
        path_scores,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RkvsBackend {
    Lda,
    Knn,
}

#[derive(Debug, Clone)]
enum RkvsRule {
    /// Linear discriminant `w'(x - mid) + log(n1 / n0) > 0`.
    Lda { w: DVector<f64>, mid: DVector<f64>, prior: f64 },
    Knn { x: DMatrix<f64>, labels: Vec<u8> },
}

/// RK-VS selection with its back-end classifier.
#[derive(Debug, Clone)]
pub struct RkvsClassifier {
    pub selection: RkvsSelection,
    rule: RkvsRule,
}

impl RkvsClassifier {
    /// Selects `p` points and fits the back-end on them.
    pub fn with_points(train: &FunctionalDataset, p: usize, backend: RkvsBackend) -> Result<Self> {
        let selection = rkvs_select(train, p)?;
        let rule = rkvs_rule(train, &selection.nodes, backend)?;
        Ok(RkvsClassifier { selection, rule })
    }

    /// `p ≤ p_max` chosen by cross-validation.
    pub fn fit(
        train: &FunctionalDataset,
        p_max: usize,
        backend: RkvsBackend,
        folds: usize,
        seed: u64,
    ) -> Result<Self> {
        let p = cv_dimension(train, p_max, folds, seed, |fit_part, held, p_max| {
            let sel = rkvs_select(fit_part, p_max.min(fit_part.m()))?;
            (1..=sel.nodes.len())
                .map(|p| rkvs_apply(&rkvs_rule(fit_part, &sel.nodes[..p], backend)?, &sel.nodes[..p], held))
                .collect()
        })?;
        RkvsClassifier::with_points(train, p, backend)
    }

    pub fn predict(&self, test: &FunctionalDataset) -> Result<Vec<u8>> {
        rkvs_apply(&self.rule, &self.selection.nodes, test)
    }
}

fn rkvs_rule(train: &FunctionalDataset, nodes: &[usize], backend: RkvsBackend) -> Result<RkvsRule> {
    match backend {
        RkvsBackend::Lda => {
            let mom = class_moments(train)?;
            let sigma = mom.pooled.select_rows(nodes).select_columns(nodes);
            let chol = linalg::cholesky_with_jitter(&sigma)?;
            let pick = |f: &dyn Fn(usize) -> f64| DVector::from_iterator(nodes.len(), nodes.iter().map(|j| f(*j)));
            let diff = pick(&|j| mom.m1[j] - mom.m0[j]);
            Ok(RkvsRule::Lda {
                w: chol.solve(&diff),
                mid: pick(&|j| 0.5 * (mom.m1[j] + mom.m0[j])),
                prior: (mom.n1 as f64 / mom.n0 as f64).ln(),
            })
        }
        RkvsBackend::Knn => Ok(RkvsRule::Knn {
            x: train.curves().select_columns(nodes),
            labels: train.labels().to_vec(),
        }),
    }
}

fn rkvs_apply(rule: &RkvsRule, nodes: &[usize], test: &FunctionalDataset) -> Result<Vec<u8>> {
    let x = test.curves().select_columns(nodes);
    match rule {
        RkvsRule::Lda { w, mid, prior } => Ok(x
            .row_iter()
            .map(|r| u8::from((r.transpose() - mid).dot(w) + prior > 0.0))
            .collect()),
        RkvsRule::Knn { x: train, labels } => knn_predict(train, labels, &x, 5),
    }
}

/// RK-VS with a fixed number of points.
pub fn classify_rkvs(
    train: &FunctionalDataset,
    test: &FunctionalDataset,
    p: usize,
    backend: RkvsBackend,
) -> Result<Vec<u8>> {
    check_grids(train, test)?;
    RkvsClassifier::with_points(train, p, backend)?.predict(test)
}

/// RK-VS with `p ≤ p_max` chosen by cross-validation.
pub fn classify_rkvs_cv(
    train: &FunctionalDataset,
    test: &FunctionalDataset,
    p_max: usize,
    backend: RkvsBackend,
    folds: usize,
    seed: u64,
) -> Result<Vec<u8>> {
    check_grids(train, test)?;
    RkvsClassifier::fit(train, p_max, backend, folds, seed)?.predict(test)
}
