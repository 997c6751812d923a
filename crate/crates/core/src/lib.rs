//! Functional logistic regression in reproducing kernel Hilbert spaces.
//!
//! Curves `x(s)`, `s ∈ [0, 1]`, are reduced to their values at a few impact
//! points, and a Firth-penalised logistic model is fitted on those values.

pub mod baselines;
pub mod bench;
pub mod cv;
pub mod error;
pub mod firthglm;
pub mod kernels;
pub mod linalg;
pub mod procsim;
pub mod rkhslogit;
pub mod seed;

pub use error::{Error, Result};
