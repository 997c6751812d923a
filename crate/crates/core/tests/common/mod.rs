//! Shared helpers for the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rkhs_logit::firthglm::{DesignMatrix, SeparationStatus};
use rkhs_logit::seed;

const TOL: f64 = 1e-9;

/// Separation status by enumerating the extreme rays of `{α : Zα >= 0}`.
///
/// `Z` holds the label-signed rows. Working in coordinates of the row space
/// makes the cone pointed; its extreme rays are the directions orthogonal to
/// `r - 1` independent rows, `r = rank Z`. Weak separation exists iff some
/// ray is nonzero on `Z`, and strict separation iff the sum of all feasible
/// rays is positive on every row.
pub fn brute_force_separation(design: &DesignMatrix) -> SeparationStatus {
    let x = design.x();
    let (n, d) = (x.nrows(), x.ncols());
    let z = DMatrix::from_fn(n, d, |i, j| {
        if design.labels()[i] == 1 {
            x[(i, j)]
        } else {
            -x[(i, j)]
        }
    });
    let svd = z.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let basis_rows: Vec<usize> = (0..svd.singular_values.len())
        .filter(|k| svd.singular_values[*k] > TOL)
        .collect();
    let r = basis_rows.len();
    if r == 0 {
        return SeparationStatus::None;
    }
    // d x r orthonormal basis of the row space
    let b = DMatrix::from_fn(d, r, |i, k| vt[(basis_rows[k], i)]);
    let zb = &z * &b;

    let mut rays: Vec<DVector<f64>> = Vec::new();
    for subset in subsets(n, r - 1) {
        let c = if subset.is_empty() {
            vec![DVector::from_element(1, 1.0)]
        } else {
            let a = zb.select_rows(&subset);
            // pad to square so the SVD also returns the null direction
            let square = a.clone().insert_row(r - 1, 0.0);
            let s = square.svd(false, true);
            if s.singular_values.iter().filter(|v| **v > TOL).count() != r - 1 {
                continue;
            }
            let vt = s.v_t.expect("requested V");
            // the right singular vector annihilated by `a`
            let mut null = None;
            for k in 0..vt.nrows() {
                let v = vt.row(k).transpose();
                if (&a * &v).amax() < 1e-7 {
                    null = Some(v);
                }
            }
            match null {
                Some(v) => vec![v],
                None => continue,
            }
        };
        for v in c {
            for sign in [1.0, -1.0] {
                let dir = &v * sign;
                let proj = &zb * &dir;
                if proj.min() >= -1e-7 && proj.max() > 1e-7 {
                    rays.push(proj);
                }
            }
        }
    }
    if rays.is_empty() {
        return SeparationStatus::None;
    }
    let total = rays.iter().fold(DVector::zeros(n), |acc, r| acc + r);
    if total.min() > 1e-7 {
        SeparationStatus::Complete
    } else {
        SeparationStatus::Quasi
    }
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Small integer design (entries in -2..=2) with random labels.
pub fn random_integer_design(seed: u64) -> DesignMatrix {
    let mut rng = seed::rng(seed);
    let n = rng.random_range(2..=10);
    let p = rng.random_range(1..=2);
    let x = DMatrix::from_fn(n, p + 1, |_, j| {
        if j == 0 {
            1.0
        } else {
            rng.random_range(-2..=2) as f64
        }
    });
    let y = (0..n).map(|_| rng.random_range(0..=1u8)).collect();
    DesignMatrix::new(x, y).expect("valid design")
}

/// Gaussian design whose labels follow a random hyperplane exactly, with
/// both classes present.
pub fn random_separated_design(seed: u64) -> DesignMatrix {
    let mut rng = seed::rng(seed);
    loop {
        let n = rng.random_range(6..=50);
        let p = rng.random_range(1..=5);
        let x = DMatrix::from_fn(n, p + 1, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.sample::<f64, _>(StandardNormal)
            }
        });
        let w = DVector::from_fn(p + 1, |j, _| {
            if j == 0 {
                0.5 * rng.sample::<f64, _>(StandardNormal)
            } else {
                rng.sample(StandardNormal)
            }
        });
        let eta = &x * &w;
        if eta.iter().any(|e| e.abs() < 1e-6) {
            continue;
        }
        let y: Vec<u8> = eta.iter().map(|e| u8::from(*e > 0.0)).collect();
        let ones = y.iter().filter(|v| **v == 1).count();
        if ones == 0 || ones == n {
            continue;
        }
        return DesignMatrix::new(x, y).expect("valid design");
    }
}
