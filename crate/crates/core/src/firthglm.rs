//! Finite-dimensional logistic regression: plain maximum likelihood, Firth's
//! Jeffreys-penalised variant, and an LP test for (quasi-)complete separation.

use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, JitteredCholesky};
use crate::procsim::FunctionalDataset;

const P_CLAMP: f64 = 1e-12;
/// Margin above which the separation LP reports complete separation.
pub const SEPARATION_EPS: f64 = 1e-9;

/// Rows `(1, x_i(t_1), ..., x_i(t_p))` with binary responses.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    y: Vec<u8>,
}

impl DesignMatrix {
    /// `x` must already contain the leading column of ones.
    pub fn new(x: DMatrix<f64>, y: Vec<u8>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::validation("design matrix is empty"));
        }
        if x.nrows() != y.len() {
            return Err(Error::validation(format!(
                "design has {} rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if x.column(0).iter().any(|v| *v != 1.0) {
            return Err(Error::validation("first design column must be all ones"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("design has non-finite entries"));
        }
        if y.iter().any(|v| *v > 1) {
            return Err(Error::validation("labels must be 0 or 1"));
        }
        Ok(DesignMatrix { x, y })
    }

    /// Prepends the intercept column to an `n × p` feature matrix.
    pub fn from_features(features: &DMatrix<f64>, y: Vec<u8>) -> Result<Self> {
        let n = features.nrows();
        let mut x = DMatrix::from_element(n, features.ncols() + 1, 1.0);
        x.columns_mut(1, features.ncols()).copy_from(features);
        DesignMatrix::new(x, y)
    }

    /// Design built from the curve values at the given grid nodes.
    pub fn from_dataset(dataset: &FunctionalDataset, nodes: &[usize]) -> Result<Self> {
        if let Some(bad) = nodes.iter().find(|j| **j >= dataset.m()) {
            return Err(Error::validation(format!("grid node {bad} out of range")));
        }
        let features = dataset.curves().select_columns(nodes);
        DesignMatrix::from_features(&features, dataset.labels().to_vec())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of coefficients, intercept included.
    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[u8] {
        &self.y
    }

    pub fn linear_predictor(&self, coefficients: &[f64]) -> DVector<f64> {
        &self.x * DVector::from_column_slice(coefficients)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparationStatus {
    None,
    Quasi,
    Complete,
}

/// How the per-sample log-likelihood terms are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Plain sum over samples.
    #[default]
    Unweighted,
    /// Class sums divided by the class sizes `n0`, `n1`.
    ClassAveraged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    /// Intercept first.
    pub coefficients: Vec<f64>,
    pub loglik: f64,
    pub penalized_loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Set by the plain MLE only; Firth fits leave it empty.
    pub separation: Option<SeparationStatus>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Bound on the sup-norm of the (modified) score.
    pub tol: f64,
    pub max_halvings: usize,
    /// Largest change of any coefficient in one Newton step.
    pub max_step: f64,
    /// MLE coefficient norm beyond which the fit is declared divergent.
    pub divergence: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 100,
            tol: 1e-8,
            max_halvings: 10,
            max_step: 5.0,
            divergence: 1e3,
        }
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn clamped(p: f64) -> f64 {
    p.clamp(P_CLAMP, 1.0 - P_CLAMP)
}

/// Success probabilities for each row.
pub fn predict_proba(design: &DesignMatrix, coefficients: &[f64]) -> Vec<f64> {
    design
        .linear_predictor(coefficients)
        .iter()
        .map(|e| sigmoid(*e))
        .collect()
}

/// Unweighted log-likelihood `sum y log p + (1 - y) log(1 - p)`.
pub fn log_likelihood(design: &DesignMatrix, coefficients: &[f64]) -> f64 {
    log_likelihood_weighted(design, coefficients, Weighting::Unweighted)
}

pub fn log_likelihood_weighted(
    design: &DesignMatrix,
    coefficients: &[f64],
    weighting: Weighting,
) -> f64 {
    let eta = design.linear_predictor(coefficients);
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for (e, y) in eta.iter().zip(&design.y) {
        let p = clamped(sigmoid(*e));
        let term = if *y == 1 { p.ln() } else { (1.0 - p).ln() };
        sums[*y as usize] += term;
        counts[*y as usize] += 1;
    }
    match weighting {
        Weighting::Unweighted => sums[0] + sums[1],
        Weighting::ClassAveraged => (0..2)
            .filter(|c| counts[*c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .sum(),
    }
}

/// Quantities at one coefficient vector.
struct State {
    p: DVector<f64>,
    /// Rows scaled by `sqrt(w_i)`.
    xw: DMatrix<f64>,
    chol: JitteredCholesky,
    loglik: f64,
    objective: f64,
}

fn evaluate(design: &DesignMatrix, beta: &DVector<f64>, firth: bool) -> Result<State> {
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::numeric("non-finite coefficients"));
    }
    let eta = &design.x * beta;
    let p = eta.map(sigmoid);
    let mut xw = design.x.clone();
    for i in 0..design.n() {
        let w = p[i] * (1.0 - p[i]);
        xw.row_mut(i).scale_mut(w.sqrt());
    }
    let info = xw.tr_mul(&xw);
    let chol = linalg::cholesky_with_jitter(&info)?;
    let loglik = log_likelihood(design, beta.as_slice());
    let objective = if firth {
        loglik + 0.5 * chol.log_det()
    } else {
        loglik
    };
    Ok(State {
        p,
        xw,
        chol,
        loglik,
        objective,
    })
}

/// Scoring iterations before switching to exact Newton steps.
const EXACT_AFTER: usize = 10;

/// Cholesky factor of minus the Hessian of `loglik + 0.5 log det I`, or
/// `None` when that matrix is not positive definite.
///
/// With `D_j = X' diag(w'_i x_ij) X` the penalty's Hessian is
/// `0.5 [X' diag(w''_i a_ii) X]_jk - 0.5 tr(I^{-1} D_j I^{-1} D_k)`, where
/// `w' = w (1 - 2p)`, `w'' = w (1 - 6w)` and `a_ii = x_i' I^{-1} x_i`.
fn firth_hessian(design: &DesignMatrix, state: &State) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let (n, d) = (design.n(), design.ncols());
    let info_inv = state.chol.solve_matrix(&DMatrix::identity(d, d));
    let lev = leverages(state);
    let mut x2 = design.x.clone();
    let mut e = Vec::with_capacity(d);
    for i in 0..n {
        let p = state.p[i];
        let w = p * (1.0 - p);
        // a_ii = h_i / w_i
        let a = if w > 0.0 { lev[i] / w } else { 0.0 };
        x2.row_mut(i).scale_mut(w * (1.0 - 6.0 * w) * a);
    }
    for j in 0..d {
        let mut xj = design.x.clone();
        for i in 0..n {
            let p = state.p[i];
            xj.row_mut(i).scale_mut(p * (1.0 - p) * (1.0 - 2.0 * p) * design.x[(i, j)]);
        }
        e.push(&info_inv * design.x.tr_mul(&xj));
    }
    let second = design.x.tr_mul(&x2);
    let cross = DMatrix::from_fn(d, d, |j, k| e[j].component_mul(&e[k].transpose()).sum());
    let neg_h = state.xw.tr_mul(&state.xw) - (second - cross) * 0.5;
    nalgebra::Cholesky::new(neg_h)
}

/// `h_i = w_i x_i' I^{-1} x_i` from the factor of `I`.
fn leverages(state: &State) -> DVector<f64> {
    let l = state.chol.l();
    let b = l
        .solve_lower_triangular(&state.xw.transpose())
        .expect("cholesky factor has a positive diagonal");
    DVector::from_iterator(b.ncols(), b.column_iter().map(|c| c.norm_squared()))
}

fn score(design: &DesignMatrix, state: &State, firth: bool) -> DVector<f64> {
    let h = if firth { Some(leverages(state)) } else { None };
    let r = DVector::from_iterator(
        design.n(),
        (0..design.n()).map(|i| {
            let y = design.y[i] as f64;
            let p = state.p[i];
            match &h {
                Some(h) => y - p + h[i] * (0.5 - p),
                None => y - p,
            }
        }),
    );
    design.x.tr_mul(&r)
}

/// Diagonal of `W^{1/2} X (X'WX)^{-1} X' W^{1/2}`.
pub fn hat_diagonals(design: &DesignMatrix, coefficients: &[f64]) -> Result<Vec<f64>> {
    check_len(design, coefficients)?;
    let state = evaluate(design, &DVector::from_column_slice(coefficients), true)?;
    Ok(leverages(&state).iter().copied().collect())
}

/// `loglik + 0.5 log det(X'WX)`.
pub fn penalized_log_likelihood(design: &DesignMatrix, coefficients: &[f64]) -> Result<f64> {
    check_len(design, coefficients)?;
    Ok(evaluate(design, &DVector::from_column_slice(coefficients), true)?.objective)
}

/// Firth modified score `sum (y - p + h (1/2 - p)) x`.
pub fn firth_score(design: &DesignMatrix, coefficients: &[f64]) -> Result<Vec<f64>> {
    check_len(design, coefficients)?;
    let state = evaluate(design, &DVector::from_column_slice(coefficients), true)?;
    Ok(score(design, &state, true).iter().copied().collect())
}

fn check_len(design: &DesignMatrix, coefficients: &[f64]) -> Result<()> {
    if coefficients.len() != design.ncols() {
        return Err(Error::validation(format!(
            "{} coefficients for a design with {} columns",
            coefficients.len(),
            design.ncols()
        )));
    }
    Ok(())
}

pub fn fit_firth(design: &DesignMatrix, options: &FitOptions) -> Result<GlmFit> {
    fit_firth_from(design, &vec![0.0; design.ncols()], options)
}

/// Firth fit warm-started at `start`.
pub fn fit_firth_from(design: &DesignMatrix, start: &[f64], options: &FitOptions) -> Result<GlmFit> {
    check_len(design, start)?;
    newton(design, DVector::from_column_slice(start), options, true)
}

pub fn fit_mle(design: &DesignMatrix, options: &FitOptions) -> Result<GlmFit> {
    let mut fit = newton(design, DVector::zeros(design.ncols()), options, false)?;
    fit.separation = Some(if fit.converged {
        SeparationStatus::None
    } else {
        detect_separation(design)?
    });
    Ok(fit)
}

/// Damped Newton ascent with step-halving on the (penalised) log-likelihood.
fn newton(
    design: &DesignMatrix,
    mut beta: DVector<f64>,
    options: &FitOptions,
    firth: bool,
) -> Result<GlmFit> {
    let mut state = evaluate(design, &beta, firth)?;
    let mut iterations = 0;
    let mut converged = false;
    // Fisher scoring on the modified score can crawl when the penalty's own
    // curvature matters (small n relative to the dimension); after a slow
    // start, exact Newton steps are used whenever the Hessian is negative
    // definite.
    let mut exact = false;
    loop {
        let u = score(design, &state, firth);
        let newton_step = if exact && firth {
            firth_hessian(design, &state)
                .map(|neg_h| neg_h.solve(&u))
        } else {
            None
        };
        let mut delta = newton_step.unwrap_or_else(|| state.chol.solve(&u));
        let big = delta.amax();
        if big > options.max_step {
            delta *= options.max_step / big;
        }
        // the step test rules out the slow drift of a separated MLE, whose
        // gradient vanishes while the coefficients keep growing
        if u.amax() <= options.tol && delta.amax() <= options.tol.sqrt() * (1.0 + beta.amax()) {
            converged = true;
            break;
        }
        if iterations >= options.max_iter {
            break;
        }
        if !firth && beta.norm() > options.divergence {
            break;
        }
        let floor = state.objective - 1e-12 * (1.0 + state.objective.abs());
        let mut accepted = None;
        for halving in 0..=options.max_halvings {
            let candidate = &beta + &delta;
            if let Ok(next) = evaluate(design, &candidate, firth) {
                if next.objective >= floor {
                    accepted = Some((candidate, next));
                    break;
                }
            }
            if halving == 0 {
                exact = true;
            }
            delta *= 0.5;
        }
        if iterations >= EXACT_AFTER {
            exact = true;
        }
        match accepted {
            Some((b, s)) => {
                beta = b;
                state = s;
                iterations += 1;
            }
            None => break,
        }
    }
    let penalized_loglik = if firth {
        state.objective
    } else {
        evaluate(design, &beta, true)
            .map(|s| s.objective)
            .unwrap_or(f64::NEG_INFINITY)
    };
    Ok(GlmFit {
        coefficients: beta.iter().copied().collect(),
        loglik: state.loglik,
        penalized_loglik,
        converged,
        iterations,
        separation: None,
    })
}

/// Classifies the design as completely, quasi-completely or not separated.
///
/// Rows are signed by their label (`z_i = ±x_i`) and columns scaled to unit
/// max-abs. The first LP maximises a common margin `δ` with `z_i'α >= δ`
/// and `α ∈ [-1, 1]^d`; a positive optimum means complete separation. The
/// second maximises `sum z_i'α` under `z_i'α >= 0`, which is positive
/// exactly when some nonzero weak separator exists.
pub fn detect_separation(design: &DesignMatrix) -> Result<SeparationStatus> {
    let (n, d) = (design.n(), design.ncols());
    let mut z = design.x.clone();
    for j in 0..d {
        let scale = z.column(j).amax();
        if scale > 0.0 {
            z.column_mut(j).unscale_mut(scale);
        }
    }
    for i in 0..n {
        if design.y[i] == 0 {
            z.row_mut(i).neg_mut();
        }
    }

    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let alpha: Vec<_> = (0..d).map(|_| lp.add_var(0.0, (-1.0, 1.0))).collect();
    let margin = lp.add_var(1.0, (f64::NEG_INFINITY, 1.0));
    for i in 0..n {
        let mut e = LinearExpr::empty();
        for (j, a) in alpha.iter().enumerate() {
            if z[(i, j)] != 0.0 {
                e.add(*a, z[(i, j)]);
            }
        }
        e.add(margin, -1.0);
        lp.add_constraint(e, ComparisonOp::Ge, 0.0);
    }
    let sol = lp
        .solve()
        .map_err(|e| Error::numeric(format!("separation LP failed: {e}")))?;
    if sol[margin] > SEPARATION_EPS {
        return Ok(SeparationStatus::Complete);
    }

    let col_sums: Vec<f64> = (0..d).map(|j| z.column(j).sum()).collect();
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let alpha: Vec<_> = col_sums
        .iter()
        .map(|c| lp.add_var(*c, (-1.0, 1.0)))
        .collect();
    for i in 0..n {
        let mut e = LinearExpr::empty();
        for (j, a) in alpha.iter().enumerate() {
            if z[(i, j)] != 0.0 {
                e.add(*a, z[(i, j)]);
            }
        }
        lp.add_constraint(e, ComparisonOp::Ge, 0.0);
    }
    let sol = lp
        .solve()
        .map_err(|e| Error::numeric(format!("separation LP failed: {e}")))?;
    if sol.objective() > SEPARATION_EPS * n as f64 {
        Ok(SeparationStatus::Quasi)
    } else {
        Ok(SeparationStatus::None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn design_1d(x: &[f64], y: &[u8]) -> DesignMatrix {
        DesignMatrix::from_features(&DMatrix::from_column_slice(x.len(), 1, x), y.to_vec()).unwrap()
    }

    #[test]
    fn loglik_examples() {
        let d = design_1d(&[0.3, -1.0, 2.0, 0.0], &[1, 0, 0, 1]);
        assert!((log_likelihood(&d, &[0.0, 0.0]) - 4.0 * 0.5f64.ln()).abs() < 1e-14);

        let d = design_1d(&[-1.0, 0.0, 1.0], &[0, 0, 1]);
        let oracle: f64 = [(-1.0, 0.0), (0.0, 0.0), (1.0, 1.0)]
            .iter()
            .map(|(x, y): &(f64, f64)| {
                let p = 1.0 / (1.0 + (-x).exp());
                y * p.ln() + (1.0 - y) * (1.0 - p).ln()
            })
            .sum();
        assert!((log_likelihood(&d, &[0.0, 1.0]) - oracle).abs() < 1e-14);

        let d = design_1d(&[-1.0, 1.0], &[0, 1]);
        let ll = log_likelihood(&d, &[0.0, 40.0]);
        assert!(ll <= 0.0 && ll > -1e-11);
    }

    #[test]
    fn class_averaged_loglik() {
        let d = design_1d(&[0.0, 0.0, 0.0], &[0, 1, 1]);
        let v = log_likelihood_weighted(&d, &[0.0, 0.0], Weighting::ClassAveraged);
        assert!((v - 2.0 * 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn hat_examples() {
        let d = design_1d(&[0.5, -1.0], &[0, 1]);
        for h in hat_diagonals(&d, &[0.1, 0.3]).unwrap() {
            assert!((h - 1.0).abs() < 1e-10);
        }
        let x = DMatrix::from_element(6, 1, 1.0);
        let d = DesignMatrix::new(x, vec![0, 1, 0, 1, 0, 1]).unwrap();
        for h in hat_diagonals(&d, &[0.0]).unwrap() {
            assert!((h - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn firth_symmetric_data_has_zero_intercept() {
        let x = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 0.3, -0.3];
        let y = [0, 1, 0, 1, 0, 1, 0, 1];
        let fit = fit_firth(&design_1d(&x, &y), &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.coefficients[0].abs() < 1e-8);
    }

    #[test]
    fn firth_separated_is_finite_interior_max() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 - 9.5).collect();
        let y: Vec<u8> = x.iter().map(|v| u8::from(*v > 0.0)).collect();
        let d = design_1d(&x, &y);
        let fit = fit_firth(&d, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.coefficients.iter().all(|c| c.is_finite() && c.abs() < 1e3));
        // grid scan of the penalised likelihood along the slope
        let b1 = fit.coefficients[1];
        let at = |s: f64| penalized_log_likelihood(&d, &[fit.coefficients[0], s]).unwrap();
        let best = at(b1);
        for k in 1..200 {
            let s = b1 * k as f64 / 50.0;
            assert!(at(s) <= best + 1e-9, "slope {s}");
        }
        let u = firth_score(&d, &fit.coefficients).unwrap();
        assert!(u.iter().all(|v| v.abs() <= 1e-8));
    }

    #[test]
    fn firth_recovers_truth() {
        use rand::Rng;
        let mut rng = crate::seed::rng(41);
        let n = 5000;
        let x: Vec<f64> = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let eta: Vec<f64> = x.iter().map(|v| 0.5 - v).collect();
        let y = crate::procsim::gen_labels(&eta, 0.0, 9).unwrap();
        let d = design_1d(&x, &y);
        let firth = fit_firth(&d, &FitOptions::default()).unwrap();
        assert!((firth.coefficients[0] - 0.5).abs() < 0.1);
        assert!((firth.coefficients[1] + 1.0).abs() < 0.1);
        let mle = fit_mle(&d, &FitOptions::default()).unwrap();
        assert!(mle.converged);
        assert_eq!(mle.separation, Some(SeparationStatus::None));
        for (a, b) in mle.coefficients.iter().zip(&firth.coefficients) {
            assert!((a - b).abs() < 5.0 / n as f64 * 10.0);
        }
    }

    #[test]
    fn mle_flags_separation() {
        let d = design_1d(&[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0], &[0, 0, 0, 1, 1, 1]);
        let fit = fit_mle(&d, &FitOptions::default()).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.separation, Some(SeparationStatus::Complete));
        assert!(fit.loglik >= log_likelihood(&d, &[0.0, 0.0]));
    }

    #[test]
    fn separation_examples() {
        let s = |x: &[f64], y: &[u8]| detect_separation(&design_1d(x, y)).unwrap();
        assert_eq!(s(&[-2.0, -1.0, 1.0, 2.0], &[0, 0, 1, 1]), SeparationStatus::Complete);
        assert_eq!(s(&[-1.0, 0.0, 0.0, 1.0], &[0, 0, 1, 1]), SeparationStatus::Quasi);
        assert_eq!(s(&[-1.0, 1.0, -1.0, 1.0], &[0, 0, 1, 1]), SeparationStatus::None);
    }

    #[test]
    fn design_validation() {
        assert!(DesignMatrix::new(DMatrix::from_element(2, 2, 2.0), vec![0, 1]).is_err());
        assert!(DesignMatrix::new(DMatrix::from_element(2, 1, 1.0), vec![0]).is_err());
        assert!(DesignMatrix::new(DMatrix::from_element(1, 1, 1.0), vec![2]).is_err());
    }

    /// Firth's data-splitting formulation: each response becomes the pair
    /// `(1 + h/2) y` successes and `(h/2)(1 - y)` extra, solved by weighted
    /// IRLS with `h` refreshed every pass.
    fn splitting_oracle(d: &DesignMatrix) -> Vec<f64> {
        let n = d.n();
        let k = d.ncols();
        let mut beta = DVector::zeros(k);
        for _ in 0..500 {
            let h = hat_diagonals(d, beta.as_slice()).unwrap();
            let eta = &d.x * &beta;
            let mut info = DMatrix::zeros(k, k);
            let mut grad = DVector::zeros(k);
            for i in 0..n {
                let p = sigmoid(eta[i]);
                let y = d.y[i] as f64;
                // pseudo-observations: weight 1 + h/2 with response y, weight h/2 with 1 - y
                let w1 = 1.0 + h[i] / 2.0;
                let w2 = h[i] / 2.0;
                let resid = w1 * (y - p) + w2 * ((1.0 - y) - p);
                let xi = d.x.row(i).transpose();
                grad += &xi * resid;
                info += &xi * xi.transpose() * ((w1 + w2) * p * (1.0 - p));
            }
            let step = info.cholesky().unwrap().solve(&grad);
            beta += &step;
            if step.amax() < 1e-13 {
                break;
            }
        }
        beta.iter().copied().collect()
    }

    fn random_design(seed: u64, n: usize, p: usize) -> DesignMatrix {
        use rand::Rng;
        let mut rng = crate::seed::rng(seed);
        let f = DMatrix::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0));
        let y = (0..n).map(|i| u8::from(rng.random::<f64>() < 0.5 || i == 0) * u8::from(i != 1)).collect();
        DesignMatrix::from_features(&f, y).unwrap()
    }

    #[test]
    fn splitting_and_score_forms_agree() {
        for seed in 0..50 {
            let d = random_design(seed, 30, 2);
            let fit = fit_firth(&d, &FitOptions::default()).unwrap();
            assert!(fit.converged);
            let oracle = splitting_oracle(&d);
            for (a, b) in fit.coefficients.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-6, "seed {seed}: {a} vs {b}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn hat_trace_is_rank(seed in 0u64..10_000, n in 4usize..30, p in 1usize..3) {
            let d = random_design(seed, n, p);
            let h = hat_diagonals(&d, &vec![0.2; p + 1]).unwrap();
            prop_assert!(h.iter().all(|v| *v >= -1e-12 && *v <= 1.0 + 1e-12));
            let sum: f64 = h.iter().sum();
            prop_assert!((sum - (p + 1) as f64).abs() < 1e-8);
        }

        #[test]
        fn firth_fixed_point(seed in 0u64..10_000) {
            let d = random_design(seed, 25, 2);
            let fit = fit_firth(&d, &FitOptions::default()).unwrap();
            prop_assert!(fit.converged);
            let u = firth_score(&d, &fit.coefficients).unwrap();
            prop_assert!(u.iter().all(|v| v.abs() <= 1e-8));
        }

        #[test]
        fn mle_is_local_max(seed in 0u64..10_000) {
            use rand::Rng;
            let d = random_design(seed, 40, 1);
            prop_assume!(detect_separation(&d).unwrap() == SeparationStatus::None);
            let fit = fit_mle(&d, &FitOptions::default()).unwrap();
            prop_assert!(fit.converged);
            let mut rng = crate::seed::rng(seed);
            for _ in 0..100 {
                let dir: Vec<f64> = (0..2).map(|_| rng.random_range(-1e-3..1e-3)).collect();
                let moved: Vec<f64> = fit.coefficients.iter().zip(&dir).map(|(a, b)| a + b).collect();
                prop_assert!(log_likelihood(&d, &moved) <= fit.loglik + 1e-12);
            }
        }
    }
}
