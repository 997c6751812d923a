//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative diagonal jitter used for the first repair attempt.
pub const BASE_JITTER: f64 = 1e-10;
/// Number of ×10 escalations after the first jittered attempt.
pub const JITTER_ESCALATIONS: usize = 3;

/// Cholesky factor together with the diagonal jitter that made it succeed.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    pub factor: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl JitteredCholesky {
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(rhs)
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor.solve(rhs)
    }

    /// log det of the (jittered) matrix.
    pub fn log_det(&self) -> f64 {
        let l = self.factor.l_dirty();
        (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
    }

    /// Lower-triangular factor with the strict upper triangle zeroed.
    pub fn l(&self) -> DMatrix<f64> {
        self.factor.l()
    }
}

/// Cholesky with the repair policy: plain first, then `1e-10 * trace / p`
/// added to the diagonal, escalated three times by a factor of ten.
pub fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<JitteredCholesky> {
    if m.nrows() != m.ncols() {
        return Err(Error::validation("cholesky of a non-square matrix"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("matrix has non-finite entries"));
    }
    if let Some(factor) = Cholesky::new(m.clone()) {
        return Ok(JitteredCholesky { factor, jitter: 0.0 });
    }
    let p = m.nrows().max(1) as f64;
    let trace = m.trace();
    if trace <= 0.0 {
        return Err(Error::numeric("matrix has non-positive trace"));
    }
    let mut jitter = BASE_JITTER * trace / p;
    for _ in 0..=JITTER_ESCALATIONS {
        let mut repaired = m.clone();
        for i in 0..m.nrows() {
            repaired[(i, i)] += jitter;
        }
        if let Some(factor) = Cholesky::new(repaired) {
            return Ok(JitteredCholesky { factor, jitter });
        }
        jitter *= 10.0;
    }
    Err(Error::numeric(format!(
        "cholesky failed after {JITTER_ESCALATIONS} jitter escalations"
    )))
}

/// Lower-triangular factor suitable for sampling `N(0, m)`.
///
/// A zero matrix yields a zero factor so degenerate kernels produce the
/// mean exactly.
pub fn sampling_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.iter().all(|v| *v == 0.0) {
        return Ok(DMatrix::zeros(m.nrows(), m.ncols()));
    }
    Ok(cholesky_with_jitter(m)?.l())
}

/// Equispaced spacing of a grid; `1` for a single node.
pub fn grid_spacing(grid: &[f64]) -> Result<f64> {
    match grid.len() {
        0 => Err(Error::validation("empty grid")),
        1 => Ok(1.0),
        m => {
            let delta = (grid[m - 1] - grid[0]) / (m - 1) as f64;
            if delta <= 0.0 {
                return Err(Error::validation("grid must be strictly increasing"));
            }
            let tol = 1e-6 * delta;
            if grid
                .windows(2)
                .any(|w| ((w[1] - w[0]) - delta).abs() > tol)
            {
                return Err(Error::validation("grid is not equispaced"));
            }
            Ok(delta)
        }
    }
}

/// Index of the grid node closest to `t` (ties go to the lower node).
pub fn nearest_node(grid: &[f64], t: f64) -> usize {
    let pos = grid.partition_point(|g| *g < t);
    if pos == 0 {
        0
    } else if pos == grid.len() {
        grid.len() - 1
    } else if (t - grid[pos - 1]) <= (grid[pos] - t) {
        pos - 1
    } else {
        pos
    }
}
