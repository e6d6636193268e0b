use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lassots_core::conditions::{
    check_db, check_re_gram, master_bounds, support_rows, validate_beta_bernstein,
    validate_hanson_wright, BernsteinSetup, RateMode, ReProbes,
};
use lassots_core::dgm::{
    population_theta, simulate, CoefficientMatrix, DgmSpec, TimeSeriesSample, DEFAULT_BURN_IN,
};
use lassots_core::experiment::{
    emit_csv, emit_figure, format_significant, run_experiment_with_jobs, ExperimentGrid,
    GridConfig, GroupBy, Study, XAxis,
};
use lassots_core::lasso::{self, estimate_errors, lambda_oracle, lambda_theory, LassoConfig};
use lassots_core::Matrix;

mod matrix_io;

use matrix_io::{read_matrix, write_matrix};

const DIGITS: usize = 12;

#[derive(Parser)]
#[command(
    name = "lassots",
    version,
    about = "Lasso for dependent, heavy-tailed time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a process described by a TOML spec and write the (X, Y) sample.
    Simulate(SimulateArgs),
    /// Fit the multi-response lasso to a sample.
    Fit(FitArgs),
    /// Randomized falsification of the lower restricted eigenvalue condition.
    CheckRe(CheckReArgs),
    /// Compare (1/T)|X'W|_inf against Q R(p, q, T).
    CheckDb(CheckDbArgs),
    /// Error bounds implied by an RE and DB certificate.
    Bounds(BoundsArgs),
    /// Monte-Carlo checks of the concentration inequalities.
    ValidateConcentration {
        #[command(subcommand)]
        which: Concentration,
    },
    /// Run a simulation study and write its table and figure.
    Experiment(ExperimentArgs),
}

/// Where the true coefficient matrix comes from.
#[derive(Args, Clone)]
struct TruthArgs {
    /// Spec of the generating process; Theta* is its population target.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Theta* as a p x q CSV.
    #[arg(long, conflicts_with = "spec")]
    theta_star: Option<PathBuf>,
}

impl TruthArgs {
    fn load(&self) -> Result<Option<CoefficientMatrix>> {
        match (&self.spec, &self.theta_star) {
            (Some(path), _) => Ok(Some(population_theta(&load_spec(path)?)?)),
            (None, Some(path)) => Ok(Some(CoefficientMatrix::new(read_matrix(path)?))),
            (None, None) => Ok(None),
        }
    }

    fn require(&self) -> Result<CoefficientMatrix> {
        self.load()?
            .context("this command needs --spec or --theta-star")
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Number of (X, Y) rows.
    #[arg(long = "t")]
    t: usize,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    burn_in: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the population Theta* here.
    #[arg(long)]
    theta_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LambdaMode {
    Fixed,
    Theory,
    Oracle,
}

#[derive(Args)]
struct FitArgs {
    /// Sample CSV as written by `simulate`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = LambdaMode::Fixed)]
    lambda_mode: LambdaMode,
    /// Penalty for `--lambda-mode fixed`.
    #[arg(long)]
    lambda: Option<f64>,
    /// Multiplier for `--lambda-mode theory`: lambda = c sqrt(log(pq)/T).
    #[arg(long)]
    c_lambda: Option<f64>,
    #[command(flatten)]
    truth: TruthArgs,
    #[arg(long)]
    theta_out: Option<PathBuf>,
    #[arg(long, default_value_t = lasso::DEFAULT_KKT_TOL)]
    kkt_tol: f64,
    #[arg(long, default_value_t = lasso::DEFAULT_MAX_SWEEPS)]
    max_sweeps: usize,
}

#[derive(Args)]
struct CheckReArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    tau: f64,
    /// Random probes per family.
    #[arg(long, default_value_t = 200)]
    probes: usize,
    /// Caps the sparsity of the random sparse probes at 2 s.
    #[arg(long)]
    s_hint: Option<usize>,
    /// Adds sign patterns on the support of Theta*.
    #[command(flatten)]
    truth: TruthArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RateKind {
    Gaussian,
    Subweibull,
}

#[derive(Args)]
struct CheckDbArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    truth: TruthArgs,
    /// Multiplier Q in front of the rate.
    #[arg(long)]
    q_mult: f64,
    #[arg(long, value_enum, default_value_t = RateKind::Subweibull)]
    rate: RateKind,
    /// Mixing-sum proxy for the Gaussian rate.
    #[arg(long, default_value_t = 1.0)]
    s_alpha: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BoundsArgs {
    /// Sparsity of Theta*.
    #[arg(long)]
    s: usize,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    tau: f64,
    /// Realized |vec(theta_hat - theta_star)|_2 to compare against the bound.
    #[arg(long)]
    l2_error: Option<f64>,
    /// Realized in-sample prediction error |D' Gamma_hat D|_F.
    #[arg(long)]
    pred_error: Option<f64>,
    /// Realized (1/T)|X'W|_inf, to check lambda >= 4 times it.
    #[arg(long)]
    deviation: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Concentration {
    /// Quadratic forms of Gaussian vectors against 2 exp(-c n min(eta, eta^2)).
    HansonWright {
        /// Use Q = I_n.
        #[arg(long, default_value_t = 100, conflicts_with = "q_cov")]
        n: usize,
        /// Covariance Q as a CSV.
        #[arg(long)]
        q_cov: Option<PathBuf>,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0"
        )]
        eta: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        n_mc: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sums of a beta-mixing AR(1) against the two-term Bernstein bound.
    BetaBernstein {
        /// AR(1) coefficient of the Gaussian process.
        #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
        a: f64,
        #[arg(long = "t", default_value_t = 2000)]
        t: usize,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0.01,0.02,0.03,0.05,0.075,0.1,0.15,0.2"
        )]
        t_grid: Vec<f64>,
        #[arg(long, default_value_t = 2000)]
        n_mc: usize,
        #[arg(long, default_value_t = 1.0)]
        gamma1: f64,
        #[arg(long, default_value_t = 2.0)]
        gamma2: f64,
        /// Subweibull norm K of the summands.
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyArg {
    HeavyTail,
    Dependence,
    Alignment,
}

impl From<StudyArg> for Study {
    fn from(s: StudyArg) -> Self {
        match s {
            StudyArg::HeavyTail => Study::HeavyTail,
            StudyArg::Dependence => Study::Dependence,
            StudyArg::Alignment => Study::RescaledAlignment,
        }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    study: StudyArg,
    /// Grid overrides; missing keys keep the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the full-size grid rather than the desk-scale one.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    out_csv: PathBuf,
    #[arg(long)]
    out_svg: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Root seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn load_spec(path: &Path) -> Result<DgmSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(DgmSpec::from_toml(&text)?)
}

fn fmt(v: f64) -> String {
    format_significant(v, DIGITS)
}

/// Writes a header and one data row.
fn write_record(path: &Path, header: &[&str], row: &[String]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    w.write_record(row)?;
    w.flush()?;
    Ok(())
}

fn verdict(pass: bool, what: &str, detail: String) -> ExitCode {
    println!("{} {what}: {detail}", if pass { "PASS" } else { "FAIL" });
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run_simulate(args: SimulateArgs) -> Result<ExitCode> {
    let spec = load_spec(&args.spec)?;
    let sample = simulate(&spec, args.t, args.burn_in, args.seed)?;
    sample.save_csv(&args.out)?;
    if let Some(path) = &args.theta_out {
        write_matrix(path, population_theta(&spec)?.values())?;
    }
    println!(
        "wrote {} rows (p = {}, q = {}) of {} to {}",
        sample.len(),
        sample.p(),
        sample.q(),
        spec.name(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_fit(args: FitArgs) -> Result<ExitCode> {
    let sample = TimeSeriesSample::load_csv(&args.input)?;
    let truth = args.truth.load()?;
    let lambda = match args.lambda_mode {
        LambdaMode::Fixed => args.lambda.context("--lambda-mode fixed needs --lambda")?,
        LambdaMode::Theory => {
            let c = args
                .c_lambda
                .context("--lambda-mode theory needs --c-lambda")?;
            lambda_theory(sample.p(), sample.q(), sample.len(), c)?
        }
        LambdaMode::Oracle => {
            let theta = truth
                .as_ref()
                .context("--lambda-mode oracle needs --spec or --theta-star")?;
            lambda_oracle(&sample, theta)?
        }
    };
    let mut config = LassoConfig::new(lambda);
    config.kkt_tol = args.kkt_tol;
    config.max_sweeps = args.max_sweeps;
    let fit = lasso::fit(&sample, &config)?;
    if let Some(path) = &args.theta_out {
        write_matrix(path, fit.theta_hat.values())?;
    }
    println!(
        "lambda = {}, objective = {}, sweeps = {}, kkt residual = {:.3e}, converged = {}, nonzeros = {}",
        fmt(lambda),
        fmt(fit.objective),
        fit.sweeps_used,
        fit.kkt_residual,
        fit.converged,
        fit.theta_hat.sparsity()
    );
    if let Some(theta) = &truth {
        let report = estimate_errors(fit.theta_hat.values(), theta.values(), &sample.x)?;
        println!(
            "l2 error = {}, frobenius error = {}, prediction error = {}",
            fmt(report.l2_vec_error()),
            fmt(report.frobenius_error()),
            fmt(report.in_sample_pred_error())
        );
    }
    if !fit.converged {
        log::warn!(
            "solver stopped after {} sweeps without reaching the KKT tolerance",
            fit.sweeps_used
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn run_check_re(args: CheckReArgs) -> Result<ExitCode> {
    let sample = TimeSeriesSample::load_csv(&args.input)?;
    let probes = ReProbes {
        n_probes: args.probes,
        s_hint: args.s_hint,
        support: args.truth.load()?.as_ref().map(support_rows),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let cert = check_re_gram(&sample.x.gram(), args.alpha, args.tau, &probes, &mut rng)?;
    write_record(
        &args.out,
        &["alpha", "tau", "n_probes", "min_margin", "pass"],
        &[
            fmt(cert.alpha),
            fmt(cert.tau),
            cert.n_probes.to_string(),
            fmt(cert.min_margin),
            cert.pass().to_string(),
        ],
    )?;
    Ok(verdict(
        cert.pass(),
        "re",
        format!(
            "min margin {} over {} probes",
            fmt(cert.min_margin),
            cert.n_probes
        ),
    ))
}

fn run_check_db(args: CheckDbArgs) -> Result<ExitCode> {
    let sample = TimeSeriesSample::load_csv(&args.input)?;
    let theta = args.truth.require()?;
    let (mode, name) = match args.rate {
        RateKind::Gaussian => (
            RateMode::Gaussian {
                s_alpha: args.s_alpha,
            },
            "gaussian",
        ),
        RateKind::Subweibull => (RateMode::Subweibull, "subweibull"),
    };
    let cert = check_db(&sample, &theta, args.q_mult, mode)?;
    write_record(
        &args.out,
        &["lhs", "bound", "rate", "pass"],
        &[
            fmt(cert.lhs),
            fmt(cert.bound),
            name.to_string(),
            cert.pass.to_string(),
        ],
    )?;
    Ok(verdict(
        cert.pass,
        "db",
        format!(
            "(1/T)|X'W|_inf = {} vs bound {}",
            fmt(cert.lhs),
            fmt(cert.bound)
        ),
    ))
}

fn run_bounds(args: BoundsArgs) -> Result<ExitCode> {
    let mut report = master_bounds(args.s, args.lambda, args.alpha, args.tau)?;
    if let Some(dev) = args.deviation {
        report = report.with_deviation(args.lambda, dev);
    }
    let l2_ok = args.l2_error.map(|e| report.l2_holds(e));
    let pred_ok = args.pred_error.map(|e| report.pred_holds(e));
    let opt = |b: Option<bool>| b.map_or(String::new(), |b| b.to_string());
    write_record(
        &args.out,
        &[
            "l2_bound",
            "pred_bound",
            "premise_ok",
            "lambda_ok",
            "l2_holds",
            "pred_holds",
        ],
        &[
            fmt(report.l2_bound),
            fmt(report.pred_bound),
            report.premise_ok.to_string(),
            opt(report.lambda_ok),
            opt(l2_ok),
            opt(pred_ok),
        ],
    )?;
    let checks = [Some(report.premise_ok), report.lambda_ok, l2_ok, pred_ok];
    let pass = checks.iter().flatten().all(|&b| b);
    Ok(verdict(
        pass,
        "bounds",
        format!(
            "l2 bound {}, squared prediction bound {}, premise alpha >= 32 s tau {}",
            fmt(report.l2_bound),
            fmt(report.pred_bound),
            if report.premise_ok { "met" } else { "not met" }
        ),
    ))
}

fn run_concentration(which: Concentration) -> Result<ExitCode> {
    match which {
        Concentration::HansonWright {
            n,
            q_cov,
            eta,
            n_mc,
            seed,
            out,
        } => {
            let q = match q_cov {
                Some(path) => read_matrix(&path)?,
                None => Matrix::identity(n),
            };
            let table = validate_hanson_wright(&q, &eta, n_mc, seed)?;
            let mut w = csv::Writer::from_path(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            w.write_record(["eta", "empirical", "bound", "slack"])?;
            for r in &table.rows {
                w.write_record([fmt(r.eta), fmt(r.empirical), fmt(r.bound), fmt(r.slack)])?;
            }
            w.flush()?;
            Ok(verdict(
                table.dominated(),
                "hanson-wright",
                format!(
                    "fitted c = {} with n = {}, {} draws",
                    fmt(table.c_hat),
                    table.n,
                    table.n_mc
                ),
            ))
        }
        Concentration::BetaBernstein {
            a,
            t,
            t_grid,
            n_mc,
            gamma1,
            gamma2,
            k,
            seed,
            out,
        } => {
            let spec = DgmSpec::GaussianVar {
                lags: vec![Matrix::diag(&[a])?],
                noise_cov: Matrix::identity(1),
            };
            let table = validate_beta_bernstein(&BernsteinSetup::new(
                spec,
                t,
                t_grid,
                n_mc,
                (gamma1, gamma2),
                k,
                seed,
            ))?;
            let mut w = csv::Writer::from_path(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            w.write_record(["t", "empirical", "term1", "term2", "bound", "slack"])?;
            for r in &table.rows {
                w.write_record([
                    fmt(r.t),
                    fmt(r.empirical),
                    fmt(r.term1),
                    fmt(r.term2),
                    fmt(r.bound),
                    fmt(r.slack),
                ])?;
            }
            w.flush()?;
            Ok(verdict(
                table.dominated(),
                "beta-bernstein",
                format!(
                    "fitted C1 = {}, C2 = {}, gamma = {}",
                    fmt(table.c1_hat),
                    fmt(table.c2_hat),
                    fmt(table.gamma)
                ),
            ))
        }
    }
}

fn run_experiment(args: ExperimentArgs) -> Result<ExitCode> {
    let study = Study::from(args.study);
    let mut grid = match &args.config {
        Some(path) => {
            let mut config =
                GridConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
            if args.full {
                config.full_scale = Some(true);
            }
            ExperimentGrid::from_config(study, &config)?
        }
        None => ExperimentGrid::defaults(study, args.full),
    };
    if let Some(seed) = args.seed {
        grid.root_seed = seed;
    }
    if args.jobs == Some(0) {
        bail!("--jobs must be at least 1");
    }
    let result = run_experiment_with_jobs(&grid, args.jobs)?;
    emit_csv(&result, &args.out_csv)?;
    if let Some(svg) = &args.out_svg {
        let (x_axis, group_by) = match study {
            Study::RescaledAlignment => (XAxis::TOverSLogP, GroupBy::P),
            _ => (XAxis::RescaledSqrt, GroupBy::ShapeOrRho),
        };
        if result.rows.is_empty() {
            log::warn!("no rows to plot; skipping {}", svg.display());
        } else {
            emit_figure(&result, x_axis, group_by, svg)?;
        }
    }
    for s in &result.skipped {
        eprintln!(
            "skipped cell {} (p = {}, m = {}, level = {}, rep {}): {}",
            s.cell, s.p, s.m, s.shape_or_rho, s.rep, s.reason
        );
    }
    println!(
        "{}: {} rows written to {}, {} replicates skipped",
        study,
        result.rows.len(),
        args.out_csv.display(),
        result.skipped.len()
    );
    Ok(if result.skipped.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Fit(a) => run_fit(a),
        Command::CheckRe(a) => run_check_re(a),
        Command::CheckDb(a) => run_check_db(a),
        Command::Bounds(a) => run_bounds(a),
        Command::ValidateConcentration { which } => run_concentration(which),
        Command::Experiment(a) => run_experiment(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
