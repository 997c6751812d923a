use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::FunctionalDataset;
use crate::error::{Error, Result};
use crate::kernels::{kernel_matrix, KernelSpec};
use crate::linalg;
use crate::seed::{self, Rng};

pub const DEFAULT_GRID_SIZE: usize = 101;

/// Nodes `k/m` for `k = 1..=m`; zero is left out because Brownian-type
/// kernels vanish there.
pub fn default_grid(m: usize) -> Vec<f64> {
    (1..=m).map(|k| k as f64 / m as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorId {
    BmFin,
    BmLogs,
    Ibm,
    Fbm,
    MixtSd,
    MixtM,
    BmSin,
    Ou,
}

impl GeneratorId {
    pub const ALL: [GeneratorId; 8] = [
        GeneratorId::BmFin,
        GeneratorId::BmLogs,
        GeneratorId::Ibm,
        GeneratorId::Fbm,
        GeneratorId::MixtSd,
        GeneratorId::MixtM,
        GeneratorId::BmSin,
        GeneratorId::Ou,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeneratorId::BmFin => "bm_fin",
            GeneratorId::BmLogs => "bm_logs",
            GeneratorId::Ibm => "ibm",
            GeneratorId::Fbm => "fbm",
            GeneratorId::MixtSd => "mixt_sd",
            GeneratorId::MixtM => "mixt_m",
            GeneratorId::BmSin => "bm_sin",
            GeneratorId::Ou => "ou",
        }
    }

    /// Mean-shift generators draw labels first; the rest draw curves first.
    pub fn is_mean_shift(self) -> bool {
        matches!(self, GeneratorId::BmFin | GeneratorId::BmLogs)
    }

    /// Covariance of the curves (marginal over classes for the
    /// response-model generators, within-class for the mean-shift ones).
    pub fn kernel(self) -> KernelSpec {
        match self {
            GeneratorId::BmFin | GeneratorId::BmLogs | GeneratorId::BmSin => {
                KernelSpec::BrownianMotion
            }
            GeneratorId::Ibm => KernelSpec::IntegratedBrownianMotion,
            GeneratorId::Fbm => KernelSpec::FractionalBrownianMotion { hurst: 0.9 },
            GeneratorId::MixtSd => KernelSpec::ScaledBrownian { scale: 1.5 },
            GeneratorId::MixtM => KernelSpec::BrownianPlusLinear,
            GeneratorId::Ou => KernelSpec::OrnsteinUhlenbeck,
        }
    }

    /// True slope and intercept of the logistic model at balanced priors.
    pub fn truth(self) -> SlopeSpec {
        let pts = vec![0.2, 0.5, 0.7];
        match self {
            GeneratorId::BmFin => SlopeSpec::finite(vec![2.0, -3.0, 1.0], pts, -0.7),
            GeneratorId::BmLogs => SlopeSpec::analytic("log(1+s)", |s| (1.0 + s).ln(), -0.25),
            GeneratorId::Ibm | GeneratorId::Fbm => {
                SlopeSpec::finite(vec![2.0, -4.0, -1.0], pts, 0.0)
            }
            GeneratorId::MixtSd | GeneratorId::MixtM => {
                SlopeSpec::finite(vec![2.0, -3.0, 1.0], pts, 0.0)
            }
            GeneratorId::BmSin | GeneratorId::Ou => {
                SlopeSpec::analytic("sin(pi s)", |s| (PI * s).sin(), 0.0)
            }
        }
    }
}

impl fmt::Display for GeneratorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeneratorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GeneratorId::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown generator `{s}`")))
    }
}

fn default_balance() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetGeneratorSpec {
    pub id: GeneratorId,
    pub n: usize,
    pub grid_size: usize,
    pub seed: u64,
    /// P(Y = 1); only adjustable for the mean-shift generators.
    #[serde(default = "default_balance")]
    pub class_balance: f64,
}

impl DatasetGeneratorSpec {
    pub fn new(id: GeneratorId, n: usize, grid_size: usize, seed: u64) -> Self {
        DatasetGeneratorSpec {
            id,
            n,
            grid_size,
            seed,
            class_balance: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::validation("generator needs n >= 2"));
        }
        if self.grid_size < 2 {
            return Err(Error::validation("generator needs grid_size >= 2"));
        }
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return Err(Error::validation("class_balance must lie in (0, 1)"));
        }
        if !self.id.is_mean_shift() && self.class_balance != 0.5 {
            return Err(Error::validation(format!(
                "class_balance is fixed at 0.5 for {}",
                self.id
            )));
        }
        Ok(())
    }

    /// Truth with the intercept shifted by the prior log-odds.
    pub fn truth(&self) -> SlopeSpec {
        let mut t = self.id.truth();
        if self.id.is_mean_shift() {
            let p = self.class_balance;
            t.set_intercept(t.intercept() + (p / (1.0 - p)).ln());
        }
        t
    }
}

/// Slope function of the logistic model, with its intercept.
#[derive(Clone)]
pub enum SlopeSpec {
    /// `sum_j coefficients[j] K(points[j], .)`
    Finite {
        coefficients: Vec<f64>,
        points: Vec<f64>,
        intercept: f64,
    },
    Analytic {
        name: String,
        function: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        intercept: f64,
    },
}

impl fmt::Debug for SlopeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlopeSpec::Finite {
                coefficients,
                points,
                intercept,
            } => f
                .debug_struct("Finite")
                .field("coefficients", coefficients)
                .field("points", points)
                .field("intercept", intercept)
                .finish(),
            SlopeSpec::Analytic {
                name, intercept, ..
            } => f
                .debug_struct("Analytic")
                .field("name", name)
                .field("intercept", intercept)
                .finish(),
        }
    }
}

impl SlopeSpec {
    pub fn finite(coefficients: Vec<f64>, points: Vec<f64>, intercept: f64) -> Self {
        SlopeSpec::Finite {
            coefficients,
            points,
            intercept,
        }
    }

    pub fn analytic(
        name: &str,
        function: impl Fn(f64) -> f64 + Send + Sync + 'static,
        intercept: f64,
    ) -> Self {
        SlopeSpec::Analytic {
            name: name.to_string(),
            function: Arc::new(function),
            intercept,
        }
    }

    pub fn intercept(&self) -> f64 {
        match self {
            SlopeSpec::Finite { intercept, .. } | SlopeSpec::Analytic { intercept, .. } => {
                *intercept
            }
        }
    }

    fn set_intercept(&mut self, value: f64) {
        match self {
            SlopeSpec::Finite { intercept, .. } | SlopeSpec::Analytic { intercept, .. } => {
                *intercept = value
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let SlopeSpec::Finite {
            coefficients,
            points,
            intercept,
        } = self
        {
            if coefficients.len() != points.len() {
                return Err(Error::validation(
                    "finite slope needs one coefficient per point",
                ));
            }
            if points.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
                return Err(Error::validation("finite slope points must lie in (0, 1)"));
            }
            let mut sorted = points.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::validation("finite slope points must be distinct"));
            }
            if coefficients.iter().chain([intercept]).any(|v| !v.is_finite()) {
                return Err(Error::validation("finite slope has non-finite values"));
            }
        }
        Ok(())
    }

    /// Value of the slope at `s`; finite slopes need the kernel.
    pub fn eval(&self, kernel: &KernelSpec, s: f64) -> f64 {
        match self {
            SlopeSpec::Finite {
                coefficients,
                points,
                ..
            } => coefficients
                .iter()
                .zip(points)
                .map(|(b, t)| b * kernel.eval(*t, s))
                .sum(),
            SlopeSpec::Analytic { function, .. } => function(s),
        }
    }
}

/// Draws `n` curves from `N(mean, K)` on `grid`.
pub fn sample_gp(
    spec: &KernelSpec,
    mean: Option<&dyn Fn(f64) -> f64>,
    grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let mut x = GpSampler::new(spec, grid)?.sample(n, seed);
    if let Some(mean) = mean {
        for (j, s) in grid.iter().enumerate() {
            let mu = mean(*s);
            x.column_mut(j).add_scalar_mut(mu);
        }
    }
    Ok(x)
}

/// Centred Gaussian sampler on a fixed grid; the factorisation is done once.
#[derive(Debug, Clone)]
pub struct GpSampler {
    factor: DMatrix<f64>,
}

impl GpSampler {
    pub fn new(spec: &KernelSpec, grid: &[f64]) -> Result<Self> {
        Ok(GpSampler {
            factor: gp_factor(spec, grid)?,
        })
    }

    pub fn sample(&self, n: usize, seed: u64) -> DMatrix<f64> {
        sample_rows(&self.factor, n, &mut seed::rng(seed))
    }
}

fn gp_factor(spec: &KernelSpec, grid: &[f64]) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let k = kernel_matrix(spec, grid)?;
    linalg::sampling_factor(&k.values)
}

/// Rows `L z` with `z` standard normal, drawn row by row.
fn sample_rows(factor: &DMatrix<f64>, n: usize, rng: &mut Rng) -> DMatrix<f64> {
    let m = factor.nrows();
    let z: Vec<f64> = (0..n * m).map(|_| rng.sample(StandardNormal)).collect();
    let z = DMatrix::from_row_slice(n, m, &z);
    z * factor.transpose()
}

/// Grid version of the inverse Loève isometry as a fixed weight vector:
/// the predictor of a curve is `weights . curve`.
#[derive(Debug, Clone)]
pub struct LoeveFunctional {
    weights: DVector<f64>,
}

impl LoeveFunctional {
    pub fn new(beta: &SlopeSpec, grid: &[f64], kernel: &KernelSpec) -> Result<Self> {
        beta.validate()?;
        if grid.is_empty() {
            return Err(Error::validation("empty grid"));
        }
        let weights = match beta {
            SlopeSpec::Finite {
                coefficients,
                points,
                ..
            } => {
                let mut w = DVector::zeros(grid.len());
                let half = 0.5 * mean_spacing(grid);
                for (b, t) in coefficients.iter().zip(points) {
                    let j = linalg::nearest_node(grid, *t);
                    if (grid[j] - t).abs() > half + 1e-12 {
                        log::warn!("slope point {t} snapped to distant grid node {}", grid[j]);
                    }
                    w[j] += b;
                }
                w
            }
            SlopeSpec::Analytic { function, .. } => {
                let sigma = kernel_matrix(kernel, grid)?;
                let chol = linalg::cholesky_with_jitter(&sigma.values)?;
                let b = DVector::from_iterator(grid.len(), grid.iter().map(|s| function(*s)));
                if b.iter().any(|v| !v.is_finite()) {
                    return Err(Error::numeric("slope is not finite on the grid"));
                }
                chol.solve(&b)
            }
        };
        Ok(LoeveFunctional { weights })
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn apply(&self, curve: &[f64]) -> f64 {
        self.weights.iter().zip(curve).map(|(w, x)| w * x).sum()
    }

    pub fn apply_rows(&self, curves: &DMatrix<f64>) -> Vec<f64> {
        (curves * &self.weights).iter().copied().collect()
    }
}

fn mean_spacing(grid: &[f64]) -> f64 {
    match grid.len() {
        0 | 1 => 1.0,
        m => (grid[m - 1] - grid[0]) / (m - 1) as f64,
    }
}

/// `<beta, curve>_K` approximated on the grid.
pub fn loeve_predictor(
    beta: &SlopeSpec,
    curve: &[f64],
    grid: &[f64],
    kernel: &KernelSpec,
) -> Result<f64> {
    if curve.len() != grid.len() {
        return Err(Error::validation("curve and grid lengths differ"));
    }
    Ok(LoeveFunctional::new(beta, grid, kernel)?.apply(curve))
}

/// Bernoulli labels with success probability `1 / (1 + exp(-intercept - eta))`.
pub fn gen_labels(predictors: &[f64], intercept: f64, seed: u64) -> Result<Vec<u8>> {
    gen_labels_with(predictors, intercept, &mut seed::rng(seed))
}

fn gen_labels_with(predictors: &[f64], intercept: f64, rng: &mut Rng) -> Result<Vec<u8>> {
    if !intercept.is_finite() || predictors.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("predictors must be finite"));
    }
    Ok(predictors
        .iter()
        .map(|eta| {
            let p = 1.0 / (1.0 + (-(intercept + eta)).exp());
            u8::from(rng.random::<f64>() < p)
        })
        .collect())
}

pub fn make_dataset(spec: &DatasetGeneratorSpec) -> Result<FunctionalDataset> {
    spec.validate()?;
    make_dataset_on_grid(spec, &default_grid(spec.grid_size))
}

/// As [`make_dataset`] on a caller-chosen grid inside `(0, 1]`.
pub fn make_dataset_on_grid(spec: &DatasetGeneratorSpec, grid: &[f64]) -> Result<FunctionalDataset> {
    spec.validate()?;
    if grid.len() < 2 || grid.iter().any(|g| !(*g > 0.0 && *g <= 1.0)) {
        return Err(Error::validation("generator grid must have >= 2 nodes in (0, 1]"));
    }
    let mut rng = seed::rng(spec.seed);
    let n = spec.n;
    let bm = gp_factor(&KernelSpec::BrownianMotion, grid)?;

    let (curves, labels) = match spec.id {
        GeneratorId::BmFin | GeneratorId::BmLogs => {
            let labels: Vec<u8> = (0..n)
                .map(|_| u8::from(rng.random::<f64>() < spec.class_balance))
                .collect();
            let mut x = sample_rows(&bm, n, &mut rng);
            let m1: Vec<f64> = match spec.id {
                GeneratorId::BmFin => grid
                    .iter()
                    .map(|&s| 2.0 * s.min(0.2) - 3.0 * s.min(0.5) + s.min(0.7))
                    .collect(),
                _ => grid.iter().map(|&s| (1.0 + s).ln()).collect(),
            };
            for (i, y) in labels.iter().enumerate() {
                if *y == 1 {
                    for (j, mu) in m1.iter().enumerate() {
                        x[(i, j)] += mu;
                    }
                }
            }
            (x, labels)
        }
        id => {
            let x = match id {
                GeneratorId::MixtSd => {
                    let scaled: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.5).collect();
                    let mut x = sample_rows(&bm, n, &mut rng);
                    for (i, s) in scaled.iter().enumerate() {
                        if *s {
                            x.row_mut(i).scale_mut(2f64.sqrt());
                        }
                    }
                    x
                }
                GeneratorId::MixtM => {
                    let up: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.5).collect();
                    let mut x = sample_rows(&bm, n, &mut rng);
                    for (i, u) in up.iter().enumerate() {
                        let sign = if *u { 1.0 } else { -1.0 };
                        for (j, s) in grid.iter().enumerate() {
                            x[(i, j)] += sign * s;
                        }
                    }
                    x
                }
                GeneratorId::BmSin => sample_rows(&bm, n, &mut rng),
                other => sample_rows(&gp_factor(&other.kernel(), grid)?, n, &mut rng),
            };
            let truth = id.truth();
            let eta = LoeveFunctional::new(&truth, grid, &id.kernel())?.apply_rows(&x);
            let labels = gen_labels_with(&eta, truth.intercept(), &mut rng)?;
            (x, labels)
        }
    };
    FunctionalDataset::new(grid.to_vec(), curves, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{EmpiricalKernel, KernelSpec};
    use proptest::prelude::*;

    fn column_stats(x: &DMatrix<f64>, j: usize) -> (f64, f64) {
        let n = x.nrows() as f64;
        let mean = x.column(j).sum() / n;
        let var = x.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn bm_variance_near_zero() {
        let grid = [0.001, 0.01, 0.5];
        let x = sample_gp(&KernelSpec::BrownianMotion, None, &grid, 4000, 11).unwrap();
        let (_, var) = column_stats(&x, 0);
        // sd of a sample variance is about var * sqrt(2/n)
        assert!((var - 0.001).abs() < 4.0 * 0.001 * (2.0f64 / 4000.0).sqrt());
    }

    #[test]
    fn zero_kernel_returns_mean() {
        let grid = vec![0.25, 0.5];
        let zero = KernelSpec::Empirical(EmpiricalKernel::new(grid.clone(), DMatrix::zeros(2, 2)).unwrap());
        let mean = |s: f64| 3.0 * s;
        let x = sample_gp(&zero, Some(&mean), &grid, 5, 1).unwrap();
        for i in 0..5 {
            assert_eq!(x[(i, 0)], 0.75);
            assert_eq!(x[(i, 1)], 1.5);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = default_grid(20);
        let a = sample_gp(&KernelSpec::OrnsteinUhlenbeck, None, &g, 7, 99).unwrap();
        let b = sample_gp(&KernelSpec::OrnsteinUhlenbeck, None, &g, 7, 99).unwrap();
        assert_eq!(a, b);
        let spec = DatasetGeneratorSpec::new(GeneratorId::MixtM, 30, 15, 5);
        assert_eq!(make_dataset(&spec).unwrap(), make_dataset(&spec).unwrap());
    }

    #[test]
    fn marginal_variance_matches_kernel() {
        let m = 11;
        for id in GeneratorId::ALL {
            if id.is_mean_shift() {
                continue;
            }
            let ds = make_dataset(&DatasetGeneratorSpec::new(id, 3000, m, 17)).unwrap();
            let k = id.kernel();
            for j in [0, 5, 10] {
                let t = ds.grid()[j];
                let (_, centred_var) = column_stats(ds.curves(), j);
                let target = k.eval(t, t);
                let se = target * (2.0f64 / 3000.0).sqrt()
                    * if id == GeneratorId::MixtSd { 1.3 } else { 1.0 };
                assert!(
                    (centred_var - target).abs() < 4.0 * se + 1e-12,
                    "{id} node {t}: {centred_var} vs {target}"
                );
            }
        }
    }

    #[test]
    fn loeve_examples() {
        let grid = default_grid(10);
        let f = SlopeSpec::finite(vec![2.0, -4.0, -1.0], vec![0.2, 0.5, 0.7], 0.0);
        let ones = vec![1.0; 10];
        let v = loeve_predictor(&f, &ones, &grid, &KernelSpec::BrownianMotion).unwrap();
        assert_eq!(v, -3.0);
        let zeros = vec![0.0; 10];
        let s = GeneratorId::BmSin.truth();
        assert_eq!(
            loeve_predictor(&s, &zeros, &grid, &KernelSpec::BrownianMotion).unwrap(),
            0.0
        );
    }

    #[test]
    fn loeve_reproduces_kernel_section() {
        let grid = default_grid(50);
        let t0 = grid[17];
        for kernel in [KernelSpec::BrownianMotion, KernelSpec::OrnsteinUhlenbeck] {
            let k2 = kernel.clone();
            let beta = SlopeSpec::analytic("K(t0,.)", move |s| k2.eval(t0, s), 0.0);
            let curve: Vec<f64> = grid.iter().map(|s| (3.0 * s).sin() + s * s).collect();
            let v = loeve_predictor(&beta, &curve, &grid, &kernel).unwrap();
            assert!((v - curve[17]).abs() < 1e-8, "{v} vs {}", curve[17]);
        }
    }

    #[test]
    fn bm_sin_matches_ito_sum() {
        let m = 201;
        let grid = default_grid(m);
        let x = sample_gp(&KernelSpec::BrownianMotion, None, &grid, 300, 4).unwrap();
        let lf = LoeveFunctional::new(&GeneratorId::BmSin.truth(), &grid, &KernelSpec::BrownianMotion)
            .unwrap();
        let mut sq = 0.0;
        for i in 0..x.nrows() {
            let mut ito = 0.0;
            let mut prev = 0.0;
            let mut prev_s = 0.0;
            for j in 0..m {
                ito += PI * (PI * prev_s).cos() * (x[(i, j)] - prev);
                prev = x[(i, j)];
                prev_s = grid[j];
            }
            let curve: Vec<f64> = x.row(i).iter().copied().collect();
            sq += (lf.apply(&curve) - ito).powi(2);
        }
        let rms = (sq / x.nrows() as f64).sqrt();
        assert!(rms < 0.1, "rms {rms}");
    }

    #[test]
    fn label_examples() {
        let labels = gen_labels(&[0.0; 20000], 0.0, 3).unwrap();
        let mean = labels.iter().map(|y| *y as f64).sum::<f64>() / 20000.0;
        assert!((mean - 0.5).abs() < 0.015);

        let labels = gen_labels(&[0.0; 1000], 50.0, 3).unwrap();
        assert!(labels.iter().all(|y| *y == 1));

        let labels = gen_labels(&vec![1.0; 100_000], 0.0, 8).unwrap();
        let mean = labels.iter().map(|y| *y as f64).sum::<f64>() / 1e5;
        assert!((mean - 1.0 / (1.0 + (-1f64).exp())).abs() < 0.01);

        assert!(gen_labels(&[f64::NAN], 0.0, 1).is_err());
    }

    #[test]
    fn bm_fin_class_means() {
        let ds = make_dataset(&DatasetGeneratorSpec::new(GeneratorId::BmFin, 4000, 21, 23)).unwrap();
        let (n0, n1) = ds.class_counts();
        assert!(n0 > 1800 && n1 > 1800);
        for j in 0..ds.m() {
            let s = ds.grid()[j];
            let m1 = 2.0 * s.min(0.2) - 3.0 * s.min(0.5) + s.min(0.7);
            let mut sums = [0.0, 0.0];
            for i in 0..ds.n() {
                sums[ds.labels()[i] as usize] += ds.curves()[(i, j)];
            }
            let se = (s / 1800.0).sqrt();
            assert!((sums[0] / n0 as f64).abs() < 4.0 * se);
            assert!((sums[1] / n1 as f64 - m1).abs() < 4.0 * se);
        }
    }

    #[test]
    fn ibm_labels_are_balanced() {
        let ds = make_dataset(&DatasetGeneratorSpec::new(GeneratorId::Ibm, 4000, 51, 2)).unwrap();
        let (_, n1) = ds.class_counts();
        let frac = n1 as f64 / 4000.0;
        assert!((frac - 0.5).abs() < 0.04, "{frac}");
    }

    #[test]
    fn every_generator_has_right_shape() {
        for id in GeneratorId::ALL {
            let ds = make_dataset(&DatasetGeneratorSpec::new(id, 2, 101, 1)).unwrap();
            assert_eq!(ds.n(), 2);
            assert_eq!(ds.m(), 101);
            assert!(ds.labels().iter().all(|y| *y <= 1));
            assert_eq!(id.name().parse::<GeneratorId>().unwrap(), id);
        }
    }

    #[test]
    fn spec_validation() {
        let mut s = DatasetGeneratorSpec::new(GeneratorId::Ibm, 1, 10, 0);
        assert!(s.validate().is_err());
        s.n = 10;
        s.class_balance = 0.3;
        assert!(s.validate().is_err());
        s.id = GeneratorId::BmFin;
        assert!(s.validate().is_ok());
        assert!((s.truth().intercept() - (-0.7 + (0.3f64 / 0.7).ln())).abs() < 1e-15);
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"bm_fin\""));
        assert!(SlopeSpec::finite(vec![1.0], vec![0.2, 0.3], 0.0).validate().is_err());
        assert!(SlopeSpec::finite(vec![1.0, 1.0], vec![0.2, 0.2], 0.0).validate().is_err());
    }

    proptest! {
        #[test]
        fn loeve_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
            let grid = default_grid(30);
            let x = sample_gp(&KernelSpec::OrnsteinUhlenbeck, None, &grid, 2, seed).unwrap();
            let c1: Vec<f64> = x.row(0).iter().copied().collect();
            let c2: Vec<f64> = x.row(1).iter().copied().collect();
            let mix: Vec<f64> = c1.iter().zip(&c2).map(|(u, v)| a * u + b * v).collect();
            let lf = LoeveFunctional::new(&GeneratorId::Ou.truth(), &grid, &KernelSpec::OrnsteinUhlenbeck).unwrap();
            let lhs = lf.apply(&mix);
            let rhs = a * lf.apply(&c1) + b * lf.apply(&c2);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs().max(rhs.abs())));
        }
    }
}
