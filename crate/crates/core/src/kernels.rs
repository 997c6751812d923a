//! Covariance kernels on `[0, 1]`, kernel matrices, the empirical covariance
//! of a sample of curves and the spectrum of the discretised covariance
//! operator.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, JitteredCholesky};
use crate::procsim::FunctionalDataset;

/// Tolerance used when checking that evaluation points lie in `[0, 1]`.
const DOMAIN_TOL: f64 = 1e-12;

/// A covariance function `K(s, t)` on `[0, 1]`.
///
/// Serialised with a `family` tag, e.g. `{"family": "fbm", "hurst": 0.9}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum KernelSpec {
    /// `min(s, t)`
    #[serde(rename = "bm")]
    BrownianMotion,
    /// `0.5 (s^{2H} + t^{2H} - |s - t|^{2H})`
    #[serde(rename = "fbm")]
    FractionalBrownianMotion { hurst: f64 },
    /// Covariance of `X(s) = ∫_0^s B(u) du`.
    #[serde(rename = "ibm")]
    IntegratedBrownianMotion,
    /// Stationary Ornstein-Uhlenbeck, `exp(-|t - s|)`.
    #[serde(rename = "ou")]
    OrnsteinUhlenbeck,
    /// `scale * min(s, t)`
    #[serde(rename = "bm_scaled")]
    ScaledBrownian { scale: f64 },
    /// `min(s, t) + s t`
    #[serde(rename = "bm_linear")]
    BrownianPlusLinear,
    /// Covariance estimated on a grid, bilinearly interpolated off-grid.
    #[serde(rename = "empirical")]
    Empirical(EmpiricalKernel),
}

impl KernelSpec {
    pub fn fbm(hurst: f64) -> Result<Self> {
        let k = KernelSpec::FractionalBrownianMotion { hurst };
        k.validate()?;
        Ok(k)
    }

    pub fn scaled_brownian(scale: f64) -> Result<Self> {
        let k = KernelSpec::ScaledBrownian { scale };
        k.validate()?;
        Ok(k)
    }

    /// Short family name as used in configuration files.
    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::BrownianMotion => "bm",
            KernelSpec::FractionalBrownianMotion { .. } => "fbm",
            KernelSpec::IntegratedBrownianMotion => "ibm",
            KernelSpec::OrnsteinUhlenbeck => "ou",
            KernelSpec::ScaledBrownian { .. } => "bm_scaled",
            KernelSpec::BrownianPlusLinear => "bm_linear",
            KernelSpec::Empirical(_) => "empirical",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::FractionalBrownianMotion { hurst } => {
                if !(hurst.is_finite() && *hurst > 0.0 && *hurst < 1.0) {
                    return Err(Error::validation(format!(
                        "hurst exponent must lie in (0, 1), got {hurst}"
                    )));
                }
            }
            KernelSpec::ScaledBrownian { scale } => {
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(Error::validation(format!(
                        "scale must be positive, got {scale}"
                    )));
                }
            }
            KernelSpec::Empirical(e) => e.validate()?,
            _ => {}
        }
        Ok(())
    }

    /// Evaluates `K(s, t)` without range checks. Callers are expected to
    /// pass points in `[0, 1]` and a validated spec.
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        let lo = s.min(t);
        let hi = s.max(t);
        match self {
            KernelSpec::BrownianMotion => lo,
            KernelSpec::FractionalBrownianMotion { hurst } => {
                let h2 = 2.0 * hurst;
                0.5 * (s.abs().powf(h2) + t.abs().powf(h2) - (s - t).abs().powf(h2))
            }
            KernelSpec::IntegratedBrownianMotion => (3.0 * hi * lo * lo - lo * lo * lo) / 6.0,
            KernelSpec::OrnsteinUhlenbeck => (-(t - s).abs()).exp(),
            KernelSpec::ScaledBrownian { scale } => scale * lo,
            KernelSpec::BrownianPlusLinear => lo + s * t,
            KernelSpec::Empirical(e) => e.eval(s, t),
        }
    }
}

/// Checked evaluation of `K(s, t)`.
pub fn eval_kernel(spec: &KernelSpec, s: f64, t: f64) -> Result<f64> {
    spec.validate()?;
    check_domain(s)?;
    check_domain(t)?;
    Ok(spec.eval(s, t))
}

fn check_domain(t: f64) -> Result<()> {
    if !(t.is_finite() && (-DOMAIN_TOL..=1.0 + DOMAIN_TOL).contains(&t)) {
        return Err(Error::validation(format!("point {t} outside [0, 1]")));
    }
    Ok(())
}

/// Covariance values stored on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EmpiricalRepr", into = "EmpiricalRepr")]
pub struct EmpiricalKernel {
    grid: Vec<f64>,
    values: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct EmpiricalRepr {
    grid: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl TryFrom<EmpiricalRepr> for EmpiricalKernel {
    type Error = Error;

    fn try_from(r: EmpiricalRepr) -> Result<Self> {
        let m = r.grid.len();
        if r.values.len() != m || r.values.iter().any(|row| row.len() != m) {
            return Err(Error::validation("empirical kernel matrix must be grid × grid"));
        }
        let values = DMatrix::from_fn(m, m, |i, j| r.values[i][j]);
        EmpiricalKernel::new(r.grid, values)
    }
}

impl From<EmpiricalKernel> for EmpiricalRepr {
    fn from(e: EmpiricalKernel) -> Self {
        let m = e.grid.len();
        EmpiricalRepr {
            values: (0..m)
                .map(|i| (0..m).map(|j| e.values[(i, j)]).collect())
                .collect(),
            grid: e.grid,
        }
    }
}

impl EmpiricalKernel {
    pub fn new(grid: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        let k = EmpiricalKernel { grid, values };
        k.validate()?;
        Ok(k)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    fn validate(&self) -> Result<()> {
        let m = self.grid.len();
        if m == 0 {
            return Err(Error::validation("empirical kernel needs a nonempty grid"));
        }
        if self.values.nrows() != m || self.values.ncols() != m {
            return Err(Error::validation("empirical kernel matrix must be grid × grid"));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("empirical kernel grid must be strictly increasing"));
        }
        if self.grid.iter().chain(self.values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::validation("empirical kernel has non-finite values"));
        }
        for i in 0..m {
            for j in 0..i {
                let (a, b) = (self.values[(i, j)], self.values[(j, i)]);
                if (a - b).abs() > 1e-10 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::validation("empirical kernel matrix is not symmetric"));
                }
            }
        }
        Ok(())
    }

    /// Cell index and interpolation weight of `t`; values outside the grid
    /// are clamped to the nearest edge.
    fn locate(&self, t: f64) -> (usize, f64) {
        let g = &self.grid;
        if g.len() == 1 || t <= g[0] {
            return (0, 0.0);
        }
        let last = g.len() - 1;
        if t >= g[last] {
            return (last - 1, 1.0);
        }
        let hi = g.partition_point(|x| *x <= t).min(last);
        let lo = hi - 1;
        (lo, (t - g[lo]) / (g[hi] - g[lo]))
    }

    fn eval(&self, s: f64, t: f64) -> f64 {
        if self.grid.len() == 1 {
            return self.values[(0, 0)];
        }
        let (i, a) = self.locate(s);
        let (j, b) = self.locate(t);
        let v = &self.values;
        (1.0 - a) * (1.0 - b) * v[(i, j)]
            + a * (1.0 - b) * v[(i + 1, j)]
            + (1.0 - a) * b * v[(i, j + 1)]
            + a * b * v[(i + 1, j + 1)]
    }
}

/// `Σ_T`: the kernel evaluated at every pair of points.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub points: Vec<f64>,
    pub values: DMatrix<f64>,
}

impl KernelMatrix {
    pub fn dim(&self) -> usize {
        self.points.len()
    }

    /// Cholesky factor under the jitter policy.
    pub fn cholesky(&self) -> Result<JitteredCholesky> {
        linalg::cholesky_with_jitter(&self.values)
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.values.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }
}

pub fn kernel_matrix(spec: &KernelSpec, points: &[f64]) -> Result<KernelMatrix> {
    if points.is_empty() {
        return Err(Error::validation("kernel matrix of an empty point list"));
    }
    spec.validate()?;
    for &t in points {
        check_domain(t)?;
    }
    let p = points.len();
    let mut values = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let v = spec.eval(points[i], points[j]);
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Ok(KernelMatrix {
        points: points.to_vec(),
        values,
    })
}

/// Empirical covariance of the curves on their grid, divisor `n`.
pub fn empirical_covariance(dataset: &FunctionalDataset) -> Result<KernelSpec> {
    Ok(KernelSpec::Empirical(EmpiricalKernel::new(
        dataset.grid().to_vec(),
        covariance_matrix(dataset.curves())?,
    )?))
}

/// `(1/n) Σ_k (x_k - x̄)(x_k - x̄)'` for the rows of `curves`.
pub(crate) fn covariance_matrix(curves: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = curves.nrows();
    if n < 2 {
        return Err(Error::validation("empirical covariance needs at least 2 samples"));
    }
    let mean = curves.row_mean();
    let mut centered = curves.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let mut c = centered.tr_mul(&centered) / n as f64;
    // exact symmetry for downstream validation
    let m = c.nrows();
    for i in 0..m {
        for j in 0..i {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

/// Eigenpairs of the discretised covariance operator.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Descending eigenvalues.
    pub values: Vec<f64>,
    /// Column `k` is the Euclidean-normalised eigenvector of `values[k]`.
    pub vectors: DMatrix<f64>,
}

/// Eigendecomposition of `Δ · Σ_S` on an equispaced grid `S`.
pub fn eigendecompose(spec: &KernelSpec, grid: &[f64]) -> Result<Spectrum> {
    let delta = linalg::grid_spacing(grid)?;
    let km = kernel_matrix(spec, grid)?;
    if km.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("kernel matrix has non-finite entries"));
    }
    Ok(symmetric_spectrum(km.values * delta))
}

/// Descending eigenpairs of a symmetric matrix.
pub(crate) fn symmetric_spectrum(m: DMatrix<f64>) -> Spectrum {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |i, k| {
        eig.eigenvectors[(i, order[k])]
    });
    Spectrum { values, vectors }
}
