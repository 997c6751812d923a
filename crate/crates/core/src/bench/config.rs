use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::procsim::{GeneratorId, DEFAULT_GRID_SIZE};
use crate::rkhslogit::DEFAULT_P_MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Benchmark,
    NormConvergence,
    Eigenvalues,
    ScSeparation,
    AsymptoticExistence,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Benchmark => "benchmark",
            Experiment::NormConvergence => "norm_convergence",
            Experiment::Eigenvalues => "eigenvalues",
            Experiment::ScSeparation => "sc_separation",
            Experiment::AsymptoticExistence => "asymptotic_existence",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodId {
    #[serde(rename = "rkhs-sq")]
    RkhsSq,
    #[serde(rename = "rkhs-mm")]
    RkhsMm,
    #[serde(rename = "pca")]
    Pca,
    #[serde(rename = "pca-knn")]
    PcaKnn,
    #[serde(rename = "knn5")]
    Knn5,
    #[serde(rename = "rk")]
    Rk,
    #[serde(rename = "rk-knn")]
    RkKnn,
}

impl MethodId {
    pub const ALL: [MethodId; 7] = [
        MethodId::RkhsSq,
        MethodId::RkhsMm,
        MethodId::Pca,
        MethodId::PcaKnn,
        MethodId::Knn5,
        MethodId::Rk,
        MethodId::RkKnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodId::RkhsSq => "rkhs-sq",
            MethodId::RkhsMm => "rkhs-mm",
            MethodId::Pca => "pca",
            MethodId::PcaKnn => "pca-knn",
            MethodId::Knn5 => "knn5",
            MethodId::Rk => "rk",
            MethodId::RkKnn => "rk-knn",
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodId::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown method `{s}`")))
    }
}

fn d_n_train() -> usize {
    200
}
fn d_n_test() -> usize {
    50
}
fn d_replications() -> usize {
    100
}
fn d_grid() -> usize {
    DEFAULT_GRID_SIZE
}
fn d_p_max() -> usize {
    DEFAULT_P_MAX
}
fn d_folds() -> usize {
    5
}
fn d_restarts() -> usize {
    5
}
fn d_max_rounds() -> usize {
    20
}
fn d_p_list() -> Vec<usize> {
    vec![1, 5, 10, 15, 20]
}
fn d_schedule() -> Vec<usize> {
    vec![50, 100, 200, 400]
}
fn d_octaves() -> usize {
    200
}
fn d_per_octave() -> usize {
    4
}
fn d_eigen_count() -> usize {
    20
}

/// Everything an experiment needs; only `experiment` and `seed` are
/// mandatory in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    #[serde(default)]
    pub generators: Vec<GeneratorId>,
    #[serde(default)]
    pub methods: Vec<MethodId>,
    #[serde(default = "d_n_train")]
    pub n_train: usize,
    #[serde(default = "d_n_test")]
    pub n_test: usize,
    #[serde(default = "d_replications")]
    pub replications: usize,
    #[serde(default = "d_grid")]
    pub grid_size: usize,
    #[serde(default = "d_p_max")]
    pub p_max: usize,
    #[serde(default = "d_folds")]
    pub folds: usize,
    /// Max-max restarts per fit.
    #[serde(default = "d_restarts")]
    pub restarts: usize,
    #[serde(default = "d_max_rounds")]
    pub max_rounds: usize,
    /// Permute labels before splitting (null-signal check).
    #[serde(default)]
    pub shuffle_labels: bool,
    /// Point counts of the norm experiment.
    #[serde(default = "d_p_list")]
    pub p_list: Vec<usize>,
    /// Sample size of the norm, eigenvalue and sign-choice experiments.
    #[serde(default)]
    pub n: Option<usize>,
    /// Fit the norm experiment at the true points instead of random ones.
    #[serde(default)]
    pub truth_points: bool,
    /// `p_n = round(kappa n)` in the existence experiment.
    #[serde(default)]
    pub kappa: Option<f64>,
    /// Fixed `p` in the existence experiment (instead of `kappa`).
    #[serde(default)]
    pub fixed_p: Option<usize>,
    #[serde(default = "d_schedule")]
    pub n_schedule: Vec<usize>,
    /// Depth of the dyadic refinement near 0 in the sign-choice grid.
    #[serde(default = "d_octaves")]
    pub octaves: usize,
    #[serde(default = "d_per_octave")]
    pub per_octave: usize,
    #[serde(default = "d_eigen_count")]
    pub eigen_count: usize,
}

impl ExperimentConfig {
    /// Config with every optional field at its default.
    pub fn new(experiment: Experiment, seed: u64) -> Self {
        serde_json::from_value(serde_json::json!({
            "experiment": experiment,
            "seed": seed,
        }))
        .expect("defaults deserialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Configured generators, or the experiment's default set.
    pub fn generator_list(&self) -> Vec<GeneratorId> {
        if !self.generators.is_empty() {
            return self.generators.clone();
        }
        use GeneratorId::*;
        match self.experiment {
            Experiment::Benchmark => vec![BmFin],
            Experiment::NormConvergence => vec![Ibm, Fbm, MixtSd, MixtM, BmSin, Ou],
            Experiment::Eigenvalues => GeneratorId::ALL.to_vec(),
            Experiment::ScSeparation | Experiment::AsymptoticExistence => vec![BmSin],
        }
    }

    pub fn method_list(&self) -> Vec<MethodId> {
        if self.methods.is_empty() {
            vec![MethodId::RkhsSq]
        } else {
            self.methods.clone()
        }
    }

    pub fn sample_size(&self) -> usize {
        self.n.unwrap_or(match self.experiment {
            Experiment::ScSeparation => 6,
            _ => 1000,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::validation(m.to_string()));
        if self.replications == 0 {
            return fail("replications must be at least 1");
        }
        if self.grid_size < 2 {
            return fail("grid_size must be at least 2");
        }
        match self.experiment {
            Experiment::Benchmark => {
                if self.n_train < 2 || self.n_test < 1 {
                    return fail("benchmark needs n_train >= 2 and n_test >= 1");
                }
                if self.p_max == 0 || self.folds < 2 {
                    return fail("benchmark needs p_max >= 1 and folds >= 2");
                }
            }
            Experiment::NormConvergence => {
                if self.p_list.is_empty() || self.p_list.iter().any(|p| *p == 0 || *p > self.grid_size) {
                    return fail("p_list entries must lie in 1..=grid_size");
                }
                if self.generator_list().iter().any(|g| g.is_mean_shift()) {
                    return fail("norm convergence uses response-model generators only");
                }
            }
            Experiment::AsymptoticExistence => {
                if self.kappa.is_some() && self.fixed_p.is_some() {
                    return fail("set either kappa or fixed_p, not both");
                }
                if let Some(k) = self.kappa {
                    if !(k > 0.0 && k.is_finite()) {
                        return fail("kappa must be positive");
                    }
                }
                if self.fixed_p == Some(0) {
                    return fail("fixed_p must be at least 1");
                }
                if self.n_schedule.is_empty() || self.n_schedule.iter().any(|n| *n < 2) {
                    return fail("n_schedule entries must be at least 2");
                }
            }
            Experiment::ScSeparation => {
                if self.sample_size() == 0 || self.per_octave == 0 {
                    return fail("sign-choice experiment needs n >= 1 and per_octave >= 1");
                }
            }
            Experiment::Eigenvalues => {
                if self.sample_size() < 2 || self.eigen_count == 0 {
                    return fail("eigenvalue experiment needs n >= 2 and eigen_count >= 1");
                }
            }
        }
        Ok(())
    }
}
