//! `rkhs-logit` command line: simulate data, fit and apply impact-point
//! models, and run the replicated experiments.
//!
//! Exit codes: 0 on success, 1 for bad input or usage, 2 for numerical
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rkhs_logit::bench::{self, Experiment, ExperimentConfig, MethodId};
use rkhs_logit::procsim::{self, DatasetGeneratorSpec, GeneratorId};
use rkhs_logit::rkhslogit::{self, CvMethod, PointModel};
use rkhs_logit::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "rkhs-logit", version, about = "Functional logistic regression at impact points")]
struct Cli {
    /// Worker threads for replication-level parallelism [env: RKHS_LOGIT_JOBS].
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a labelled dataset and write it as CSV.
    Simulate {
        #[arg(long)]
        generator: GeneratorId,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = procsim::DEFAULT_GRID_SIZE)]
        grid: usize,
        #[arg(long)]
        seed: u64,
        /// Probability of label 1.
        #[arg(long, default_value_t = 0.5)]
        balance: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit an impact-point model, choosing p by cross-validation.
    Fit {
        #[arg(long, default_value = "rkhs-sq")]
        method: MethodId,
        #[arg(long, default_value_t = rkhslogit::DEFAULT_P_MAX)]
        pmax: usize,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Skip cross-validation and use this many points.
        #[arg(long)]
        p: Option<usize>,
        /// Max-max restarts.
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a fitted model; writes `prob,label` per curve.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replicated train/test misclassification.
    Benchmark(ExperimentArgs),
    /// RKHS-norm error of fits at random points.
    Norms(ExperimentArgs),
    /// Eigenvalues of empirical covariance operators.
    Eigen(ExperimentArgs),
    /// Frequency of a point where all signs follow the labels.
    Separation(ExperimentArgs),
    /// Separation frequency as p grows with n.
    Existence(ExperimentArgs),
}

/// Shared experiment flags; each one overrides the JSON config.
#[derive(Debug, Args)]
struct ExperimentArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Suffix of the output files instead of the current unix time.
    #[arg(long)]
    stamp: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    generators: Option<Vec<GeneratorId>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<MethodId>>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    pmax: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    shuffle_labels: bool,
    /// Sample size (norms, eigen, separation).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    p_list: Option<Vec<usize>>,
    #[arg(long)]
    truth_points: bool,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    fixed_p: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    n_schedule: Option<Vec<usize>>,
    #[arg(long)]
    octaves: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn jobs(flag: Option<usize>) -> Result<usize> {
    if let Some(j) = flag {
        return Ok(j.max(1));
    }
    match std::env::var("RKHS_LOGIT_JOBS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(|j| j.max(1))
            .map_err(|_| Error::Validation(format!("RKHS_LOGIT_JOBS={v} is not a count"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn run(cli: Cli) -> Result<()> {
    let jobs = jobs(cli.jobs)?;
    match cli.command {
        Command::Simulate {
            generator,
            n,
            grid,
            seed,
            balance,
            out,
        } => {
            let mut spec = DatasetGeneratorSpec::new(generator, n, grid, seed);
            spec.class_balance = balance;
            let ds = procsim::make_dataset(&spec)?;
            procsim::save_csv(&ds, &out)
        }
        Command::Fit {
            method,
            pmax,
            folds,
            p,
            restarts,
            seed,
            data,
            out,
        } => {
            let cv = match method {
                MethodId::RkhsSq => CvMethod::Sequential,
                MethodId::RkhsMm => CvMethod::MaxMax {
                    restarts,
                    max_rounds: 20,
                },
                other => {
                    return Err(Error::Validation(format!(
                        "`fit` supports rkhs-sq and rkhs-mm, not {other}"
                    )))
                }
            };
            let ds = procsim::load_csv(&data)?;
            let model = bench::with_jobs(jobs, || -> Result<PointModel> {
                let p = match p {
                    Some(p) => p,
                    None => {
                        let sel = rkhslogit::select_p_cv(&ds, pmax, folds, cv, seed)?;
                        log::info!("cross-validated errors {:?}, p = {}", sel.errors, sel.p);
                        sel.p
                    }
                };
                let path = rkhslogit::fit_path(&ds, p, cv, seed)?;
                Ok(path.into_iter().last().expect("non-empty path"))
            })??;
            let mut text = model.to_json()?;
            text.push('\n');
            procsim::write_atomic(&out, text.as_bytes())
        }
        Command::Predict { model, data, out } => {
            let model = PointModel::from_json(&std::fs::read_to_string(&model)?)?;
            let ds = procsim::load_csv(&data)?;
            let probs = model.predict_proba(&ds)?;
            let mut text = String::from("prob,label\n");
            for p in &probs {
                text.push_str(&format!("{p},{}\n", u8::from(*p > 0.5)));
            }
            procsim::write_atomic(&out, text.as_bytes())?;
            let pred: Vec<u8> = probs.iter().map(|p| u8::from(*p > 0.5)).collect();
            let err = bench::misclassification_rate(&pred, ds.labels())?;
            println!("misclassification rate: {err}");
            Ok(())
        }
        Command::Benchmark(a) => experiment(Experiment::Benchmark, a, jobs),
        Command::Norms(a) => experiment(Experiment::NormConvergence, a, jobs),
        Command::Eigen(a) => experiment(Experiment::Eigenvalues, a, jobs),
        Command::Separation(a) => experiment(Experiment::ScSeparation, a, jobs),
        Command::Existence(a) => experiment(Experiment::AsymptoticExistence, a, jobs),
    }
}

fn load_config(kind: Experiment, a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let cfg = ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?;
            if cfg.experiment != kind {
                return Err(Error::Validation(format!(
                    "config {} describes `{}`, not `{}`",
                    path.display(),
                    cfg.experiment.name(),
                    kind.name()
                )));
            }
            cfg
        }
        None => {
            let seed = a
                .seed
                .ok_or_else(|| Error::Validation("--seed is required without --config".into()))?;
            ExperimentConfig::new(kind, seed)
        }
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),* $(,)?) => {
            $(if let Some(v) = a.$flag.clone() { cfg.$field = v; })*
        };
    }
    set!(seed => seed, generators => generators, methods => methods,
        replications => replications, n_train => n_train, n_test => n_test,
        grid => grid_size, pmax => p_max, folds => folds, restarts => restarts,
        p_list => p_list, n_schedule => n_schedule, octaves => octaves);
    if a.n.is_some() {
        cfg.n = a.n;
    }
    if a.kappa.is_some() {
        cfg.kappa = a.kappa;
        cfg.fixed_p = None;
    }
    if a.fixed_p.is_some() {
        cfg.fixed_p = a.fixed_p;
        cfg.kappa = None;
    }
    cfg.shuffle_labels |= a.shuffle_labels;
    cfg.truth_points |= a.truth_points;
    cfg.validate()?;
    Ok(cfg)
}

fn experiment(kind: Experiment, a: ExperimentArgs, jobs: usize) -> Result<()> {
    let cfg = load_config(kind, &a)?;
    let output = bench::with_jobs(jobs, || bench::run_experiment(&cfg))??;
    let stamp = a.stamp.unwrap_or_else(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs())
    });
    for path in bench::persist(&output, Path::new(&a.out), stamp)? {
        println!("{}", path.display());
    }
    Ok(())
}
