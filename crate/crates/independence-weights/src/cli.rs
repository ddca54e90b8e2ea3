//! Command-line surface: `weights`, `balance`, `adrf`, `bootstrap`, and
//! `simulate` subcommands over CSV files.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 solver
//! non-convergence (best-feasible weights are still written, along with a
//! `<output>.warnings` file). Stdout carries only the primary table; all
//! logs and a machine-readable JSON error go to stderr. Every run is fully
//! determined by its inputs and the `--seed` flag.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{load_dataset, Dataset, WeightVector};
use crate::error::{Error, Result};
use crate::estimators::{adrf_curve, default_grid, quantile_curve, EstimatorKind, Kernel};
use crate::inference::{bootstrap_bands, BootstrapConfig};
use crate::simulation::{DgpConfig, EffectType, ExperimentMethod, ExposureFamily};
use crate::solver::{independence_weights, MomentSpec, SolverConfig, WeightMethod};

#[derive(Debug, Parser)]
#[command(
    name = "independence-weights",
    version,
    about = "Covariate balancing weights for continuous exposures",
    max_term_width = 100
)]
struct Cli {
    /// Cap on internal parallelism (defaults to all cores). Results do not
    /// depend on the thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for all randomized steps (bootstrap resampling, simulation).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate independence weights and write them as a one-column CSV.
    Weights(WeightsArgs),
    /// Report covariate balance diagnostics for a given weight vector.
    Balance(BalanceArgs),
    /// Estimate the average dose-response curve over a grid.
    Adrf(AdrfArgs),
    /// Estimate the dose-response curve with bootstrap percentile bands.
    Bootstrap(BootstrapArgs),
    /// Run a synthetic-data simulation experiment comparing methods.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args, Clone)]
struct InputArgs {
    /// Input CSV file with a header row.
    #[arg(long)]
    input: PathBuf,

    /// Name of the exposure column.
    #[arg(long)]
    exposure: String,

    /// Name of the outcome column (required by adrf/bootstrap).
    #[arg(long)]
    outcome: Option<String>,

    /// Comma-separated covariate column names (default: all other columns).
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
}

impl InputArgs {
    fn load(&self) -> Result<Dataset> {
        load_dataset(
            &self.input,
            &self.exposure,
            self.outcome.as_deref(),
            self.covariates.as_deref(),
        )
    }
}

#[derive(Debug, Args, Clone)]
struct SolverArgs {
    /// Ridge penalty on the weights (0 = plain DCOW, > 0 = penalized).
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,

    /// Rebalance the marginal terms by covariate dimension.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    dim_adjust: bool,

    /// Additionally force exact decorrelation of first-order moments.
    #[arg(long, default_value_t = false)]
    decorrelate_moments: bool,

    /// Iteration cap for the quadratic-programming solver.
    #[arg(long, default_value_t = SolverConfig::default().max_iterations)]
    max_iterations: usize,
}

impl SolverArgs {
    fn solver_config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            lambda: self.lambda,
            max_iterations: self.max_iterations,
            seed,
            ..SolverConfig::default()
        }
    }

    fn weight_method(&self, seed: u64, p: usize) -> WeightMethod {
        WeightMethod::Dcow {
            config: self.solver_config(seed),
            dim_adjust: self.dim_adjust,
            moments: self.decorrelate_moments.then(|| MomentSpec::first_order(p)),
        }
    }
}

#[derive(Debug, Args)]
struct WeightsArgs {
    #[command(flatten)]
    input: InputArgs,

    #[command(flatten)]
    solver: SolverArgs,

    /// Write the weights to this CSV file (in addition to the stdout summary).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BalanceArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Weight source: 'uniform', 'dcow', 'gps-normal', or a weight CSV path.
    #[arg(long, default_value = "uniform")]
    weights: String,

    #[command(flatten)]
    solver: SolverArgs,

    /// Also write the table to this CSV file.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AdrfArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Weight source: 'uniform', 'dcow', 'gps-normal', or a weight CSV path.
    #[arg(long, default_value = "uniform")]
    weights: String,

    #[command(flatten)]
    solver: SolverArgs,

    #[command(flatten)]
    curve: CurveArgs,

    /// Estimate a conditional quantile curve at this level instead of the mean.
    #[arg(long)]
    quantile: Option<f64>,

    /// Also write the curve to this CSV file.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
struct CurveArgs {
    /// ADRF estimator.
    #[arg(long, value_enum, default_value = "nw-stabilized")]
    estimator: EstimatorName,

    /// Smoothing kernel: epanechnikov or gaussian.
    #[arg(long, default_value = "epanechnikov")]
    kernel: Kernel,

    /// Kernel bandwidth: 'auto' for the rule of thumb, or a positive number.
    #[arg(long, default_value = "auto")]
    bandwidth: Bandwidth,

    /// Number of evaluation grid points.
    #[arg(long, default_value_t = 50)]
    grid_size: usize,

    /// Polynomial degree of the outcome model used by the dr estimator.
    #[arg(long, default_value_t = 1)]
    outcome_degree: usize,
}

impl CurveArgs {
    fn estimator_kind(&self) -> EstimatorKind {
        self.estimator.kind(self.outcome_degree)
    }

    fn bandwidth_value(&self) -> Option<f64> {
        self.bandwidth.value()
    }
}

/// Estimator menu as named on the command line; `dr` picks its polynomial
/// degree up from `--outcome-degree`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum EstimatorName {
    Nw,
    NwStabilized,
    LocalLinear,
    Dr,
}

impl EstimatorName {
    fn kind(self, outcome_degree: usize) -> EstimatorKind {
        match self {
            EstimatorName::Nw => EstimatorKind::Nw,
            EstimatorName::NwStabilized => EstimatorKind::NwStabilized,
            EstimatorName::LocalLinear => EstimatorKind::LocalLinear,
            EstimatorName::Dr => EstimatorKind::DoublyRobust {
                degree: outcome_degree,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Bandwidth {
    Auto,
    Fixed(f64),
}

impl Bandwidth {
    fn value(self) -> Option<f64> {
        match self {
            Bandwidth::Auto => None,
            Bandwidth::Fixed(h) => Some(h),
        }
    }
}

impl std::str::FromStr for Bandwidth {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(Bandwidth::Auto);
        }
        match s.parse::<f64>() {
            Ok(h) if h > 0.0 && h.is_finite() => Ok(Bandwidth::Fixed(h)),
            _ => Err(format!("expected 'auto' or a positive number, got '{s}'")),
        }
    }
}

impl clap::builder::ValueParserFactory for Bandwidth {
    type Parser = clap::builder::ValueParser;

    fn value_parser() -> Self::Parser {
        clap::builder::ValueParser::new(|s: &str| s.parse::<Bandwidth>())
    }
}

#[derive(Debug, Args)]
struct BootstrapArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Weighting method re-estimated on every resample.
    #[arg(long, value_enum, default_value = "dcow")]
    weight_method: WeightMethodName,

    #[command(flatten)]
    solver: SolverArgs,

    #[command(flatten)]
    curve: CurveArgs,

    /// Number of bootstrap resamples.
    #[arg(long, default_value_t = 200)]
    replications: usize,

    /// Pointwise band level 1 - alpha.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    /// Maximum tolerated number of failed resamples.
    #[arg(long, default_value_t = 20)]
    max_failures: usize,

    /// Also write the bands to this CSV file.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Sample size per replication.
    #[arg(long, default_value_t = 200)]
    n: usize,

    /// Number of continuous covariates.
    #[arg(long, default_value_t = 2)]
    p_continuous: usize,

    /// Number of binary covariates.
    #[arg(long, default_value_t = 1)]
    p_binary: usize,

    /// Strength of the exposure-covariate dependence (0 = none).
    #[arg(long, default_value_t = 1.0)]
    confounding_strength: f64,

    /// Treatment effect type: constant or heterogeneous.
    #[arg(long, default_value = "constant")]
    effect_type: EffectType,

    /// Outcome noise standard deviation.
    #[arg(long, default_value_t = 5.0)]
    noise_sd: f64,

    /// Exposure family: normal or gamma.
    #[arg(long, default_value = "normal")]
    exposure_family: ExposureFamily,

    /// Number of replications.
    #[arg(long, default_value_t = 100)]
    replications: usize,

    /// Comma-separated methods to compare.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "uniform,dcow")]
    methods: Vec<MethodName>,

    #[command(flatten)]
    solver: SolverArgs,

    /// ADRF estimator used by the non-DR methods.
    #[arg(long, value_enum, default_value = "nw-stabilized")]
    estimator: EstimatorName,

    /// Smoothing kernel: epanechnikov or gaussian.
    #[arg(long, default_value = "gaussian")]
    kernel: Kernel,

    /// Polynomial degree of the outcome model used by the dcow-dr method.
    #[arg(long, default_value_t = 2)]
    outcome_degree: usize,

    /// Also write the result table to this CSV file.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Weight source re-estimated inside every bootstrap resample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum WeightMethodName {
    Uniform,
    Dcow,
    GpsNormal,
}

/// Weighting/estimation recipes accepted by `simulate --methods`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum MethodName {
    Uniform,
    Dcow,
    DcowDm,
    GpsNormal,
    DcowDr,
}

impl MethodName {
    fn label(self) -> &'static str {
        match self {
            MethodName::Uniform => "uniform",
            MethodName::Dcow => "dcow",
            MethodName::DcowDm => "dcow-dm",
            MethodName::GpsNormal => "gps-normal",
            MethodName::DcowDr => "dcow-dr",
        }
    }
}

impl clap::builder::ValueParserFactory for Kernel {
    type Parser = clap::builder::ValueParser;

    fn value_parser() -> Self::Parser {
        clap::builder::ValueParser::new(|s: &str| {
            s.parse::<Kernel>().map_err(|e| e.to_string())
        })
    }
}

impl clap::builder::ValueParserFactory for EffectType {
    type Parser = clap::builder::ValueParser;

    fn value_parser() -> Self::Parser {
        clap::builder::ValueParser::new(|s: &str| {
            s.parse::<EffectType>().map_err(|e| e.to_string())
        })
    }
}

impl clap::builder::ValueParserFactory for ExposureFamily {
    type Parser = clap::builder::ValueParser;

    fn value_parser() -> Self::Parser {
        clap::builder::ValueParser::new(|s: &str| {
            s.parse::<ExposureFamily>().map_err(|e| e.to_string())
        })
    }
}

/// Outcome of one subcommand: the primary table plus an exit code.
struct RunOutput {
    /// Primary table, printed to stdout and optionally written to a file.
    table: String,
    output: Option<PathBuf>,
    /// Log lines for stderr.
    logs: Vec<String>,
    exit: i32,
}

fn error_category(code: i32) -> &'static str {
    match code {
        1 => "usage",
        3 => "non_convergence",
        _ => "data",
    }
}

fn emit_error(code: i32, message: &str) {
    eprintln!("error: {message}");
    let json = serde_json::json!({
        "error": error_category(code),
        "message": message,
    });
    eprintln!("{json}");
}

/// Parses `argv` and runs the selected subcommand, returning the process
/// exit code. All output happens here; `main` only forwards the code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{err}");
                    0
                }
                _ => {
                    emit_error(1, &err.render().to_string());
                    1
                }
            };
        }
    };

    if let Some(threads) = cli.threads {
        if threads == 0 {
            emit_error(1, "--threads must be at least 1");
            return 1;
        }
        // Ignore the error if a pool already exists (e.g. repeated calls in
        // tests); the pool size only affects speed, never results.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    let result = match &cli.command {
        Command::Weights(args) => run_weights(&cli, args),
        Command::Balance(args) => run_balance(&cli, args),
        Command::Adrf(args) => run_adrf(&cli, args),
        Command::Bootstrap(args) => run_bootstrap(&cli, args),
        Command::Simulate(args) => run_simulate(&cli, args),
    };

    match result {
        Ok(out) => {
            for line in &out.logs {
                eprintln!("{line}");
            }
            if let Some(path) = &out.output {
                if let Err(err) = std::fs::write(path, &out.table) {
                    emit_error(2, &format!("cannot write {}: {err}", path.display()));
                    return 2;
                }
            }
            print!("{}", out.table);
            out.exit
        }
        Err(err) => {
            let code = 2;
            emit_error(code, &err.to_string());
            code
        }
    }
}

fn resolve_weights(
    spec: &str,
    dataset: &Dataset,
    solver: &SolverArgs,
    seed: u64,
) -> Result<(WeightVector, Vec<String>)> {
    match spec {
        "uniform" => Ok((WeightVector::uniform(dataset.n()), Vec::new())),
        "dcow" => {
            let result = independence_weights(
                dataset,
                &solver.solver_config(seed),
                solver.dim_adjust,
                solver
                    .decorrelate_moments
                    .then(|| MomentSpec::first_order(dataset.p()))
                    .as_ref(),
            )?;
            Ok((result.weights, result.warnings))
        }
        "gps-normal" => Ok((
            crate::diagnostics::gps_normal_weights(dataset, 500.0)?,
            Vec::new(),
        )),
        path => {
            let w = WeightVector::read_csv(Path::new(path), "file")?;
            if w.len() != dataset.n() {
                return Err(Error::Invalid(format!(
                    "weight file has {} rows but the dataset has {}",
                    w.len(),
                    dataset.n()
                )));
            }
            Ok((w, Vec::new()))
        }
    }
}

fn run_weights(cli: &Cli, args: &WeightsArgs) -> Result<RunOutput> {
    let dataset = args.input.load()?;
    let result = independence_weights(
        &dataset,
        &args.solver.solver_config(cli.seed),
        args.solver.dim_adjust,
        args.solver
            .decorrelate_moments
            .then(|| MomentSpec::first_order(dataset.p()))
            .as_ref(),
    )?;

    let mut table = String::from("metric,value\n");
    let _ = writeln!(table, "method,{}", result.weights.label());
    let _ = writeln!(table, "n,{}", dataset.n());
    let _ = writeln!(table, "ess,{}", result.ess);
    let _ = writeln!(table, "iterations,{}", result.iterations);
    let _ = writeln!(table, "converged,{}", result.converged);
    let _ = writeln!(table, "objective,{}", result.objective);
    let _ = writeln!(table, "criterion_total,{}", result.criterion.total);
    let _ = writeln!(table, "criterion_dcov,{}", result.criterion.weighted_dcov);
    let _ = writeln!(table, "criterion_energy_x,{}", result.criterion.energy_x);
    let _ = writeln!(table, "criterion_energy_a,{}", result.criterion.energy_a);

    let mut logs: Vec<String> = result.warnings.iter().map(|w| format!("warning: {w}")).collect();

    if let Some(path) = &args.output {
        result.weights.write_csv(path)?;
        logs.push(format!("wrote weights to {}", path.display()));
    }

    let exit = if result.converged {
        0
    } else {
        // Non-convergence still writes the best-feasible weights above; the
        // warning file makes the condition visible to pipelines that only
        // check for file existence.
        if let Some(path) = &args.output {
            let warn_path = path.with_extension("warnings");
            let mut text = String::from("solver did not converge\n");
            for w in &result.warnings {
                text.push_str(w);
                text.push('\n');
            }
            std::fs::write(&warn_path, text).map_err(|source| Error::Io {
                path: warn_path.clone(),
                source,
            })?;
            logs.push(format!("wrote warnings to {}", warn_path.display()));
        }
        emit_error(3, "solver did not converge within the iteration budget");
        3
    };

    Ok(RunOutput {
        table,
        // weights go to --output via write_csv above; the stdout table is the
        // summary, so pass no output path here.
        output: None,
        logs,
        exit,
    })
}

fn run_balance(cli: &Cli, args: &BalanceArgs) -> Result<RunOutput> {
    let dataset = args.input.load()?;
    let (weights, warnings) = resolve_weights(&args.weights, &dataset, &args.solver, cli.seed)?;
    let report = crate::diagnostics::default_balance_table(&dataset, &weights)?;

    let mut table = String::from("metric,value\n");
    let _ = writeln!(table, "weights,{}", weights.label());
    let _ = writeln!(table, "n,{}", dataset.n());
    let _ = writeln!(table, "ess,{}", report.ess);
    let _ = writeln!(table, "criterion_total,{}", report.criterion.total);
    let _ = writeln!(table, "criterion_dcov,{}", report.criterion.weighted_dcov);
    let _ = writeln!(table, "criterion_energy_x,{}", report.criterion.energy_x);
    let _ = writeln!(table, "criterion_energy_a,{}", report.criterion.energy_a);
    let _ = writeln!(table, "corr_mean,{}", report.corr_mean);
    let _ = writeln!(table, "corr_sd,{}", report.corr_sd);
    let _ = writeln!(table, "corr_median,{}", report.corr_median);
    let _ = writeln!(table, "corr_p95,{}", report.corr_p95);
    let _ = writeln!(table, "corr_max,{}", report.corr_max);
    let _ = writeln!(table, "n_pairs,{}", report.n_pairs);
    let _ = writeln!(table, "skipped,{}", report.skipped);

    Ok(RunOutput {
        table,
        output: args.output.clone(),
        logs: warnings.iter().map(|w| format!("warning: {w}")).collect(),
        exit: 0,
    })
}

fn run_adrf(cli: &Cli, args: &AdrfArgs) -> Result<RunOutput> {
    let dataset = args.input.load()?;
    if dataset.outcome().is_none() {
        return Err(Error::Invalid(
            "adrf requires --outcome naming a column in the input file".into(),
        ));
    }
    let (weights, mut warnings) =
        resolve_weights(&args.weights, &dataset, &args.solver, cli.seed)?;
    let bandwidth = args.curve.bandwidth_value();
    let grid = default_grid(dataset.exposure(), args.curve.grid_size)?;
    let estimate = match args.quantile {
        Some(alpha) => quantile_curve(
            &dataset,
            &weights,
            alpha,
            args.curve.kernel,
            bandwidth,
            Some(grid),
        )?,
        None => adrf_curve(
            &dataset,
            &weights,
            args.curve.estimator_kind(),
            args.curve.kernel,
            bandwidth,
            Some(grid),
        )?,
    };
    warnings.extend(estimate.warnings.iter().cloned());

    let mut table = String::from("grid,estimate\n");
    for (g, e) in estimate.grid.iter().zip(&estimate.estimates) {
        let _ = writeln!(table, "{g},{e}");
    }

    let mut logs: Vec<String> = warnings.iter().map(|w| format!("warning: {w}")).collect();
    logs.push(format!(
        "estimator={} kernel={} bandwidth={}",
        estimate.estimator,
        estimate.kernel.name(),
        estimate.bandwidth
    ));

    Ok(RunOutput {
        table,
        output: args.output.clone(),
        logs,
        exit: 0,
    })
}

fn run_bootstrap(cli: &Cli, args: &BootstrapArgs) -> Result<RunOutput> {
    let dataset = args.input.load()?;
    if dataset.outcome().is_none() {
        return Err(Error::Invalid(
            "bootstrap requires --outcome naming a column in the input file".into(),
        ));
    }
    let method = match args.weight_method {
        WeightMethodName::Uniform => WeightMethod::Uniform,
        WeightMethodName::Dcow => args.solver.weight_method(cli.seed, dataset.p()),
        WeightMethodName::GpsNormal => WeightMethod::GpsNormal { truncate_at: 500.0 },
    };
    let config = BootstrapConfig {
        replications: args.replications,
        alpha: args.alpha,
        seed: cli.seed,
        max_failures: args.max_failures,
    };
    let grid = default_grid(dataset.exposure(), args.curve.grid_size)?;
    let bands = bootstrap_bands(
        &dataset,
        &method,
        args.curve.estimator_kind(),
        args.curve.kernel,
        args.curve.bandwidth_value(),
        Some(grid),
        &config,
    )?;

    let table = bands.to_csv_string();
    let logs = vec![format!(
        "replications={} failures={} alpha={}",
        bands.replications, bands.failures, bands.alpha
    )];

    Ok(RunOutput {
        table,
        output: args.output.clone(),
        logs,
        exit: 0,
    })
}

fn parse_methods(args: &SimulateArgs, seed: u64) -> Vec<ExperimentMethod> {
    let p = args.p_continuous + args.p_binary;
    let estimator = args.estimator.kind(args.outcome_degree);
    let solver = &args.solver;
    args.methods
        .iter()
        .map(|&name| {
            let (weights, est) = match name {
                MethodName::Uniform => (WeightMethod::Uniform, estimator),
                MethodName::Dcow => (solver.weight_method(seed, p), estimator),
                MethodName::DcowDm => (
                    WeightMethod::Dcow {
                        config: solver.solver_config(seed),
                        dim_adjust: solver.dim_adjust,
                        moments: Some(MomentSpec::first_order(p)),
                    },
                    estimator,
                ),
                MethodName::GpsNormal => {
                    (WeightMethod::GpsNormal { truncate_at: 500.0 }, estimator)
                }
                MethodName::DcowDr => (
                    solver.weight_method(seed, p),
                    EstimatorKind::DoublyRobust {
                        degree: args.outcome_degree,
                    },
                ),
            };
            let mut method = ExperimentMethod::new(name.label(), weights, est);
            method.kernel = args.kernel;
            method
        })
        .collect()
}

fn run_simulate(cli: &Cli, args: &SimulateArgs) -> Result<RunOutput> {
    let config = DgpConfig {
        n: args.n,
        p_continuous: args.p_continuous,
        p_binary: args.p_binary,
        confounding_strength: args.confounding_strength,
        effect_type: args.effect_type,
        noise_sd: args.noise_sd,
        exposure_family: args.exposure_family,
        seed: cli.seed,
    };
    let methods = parse_methods(args, cli.seed);
    let table = crate::simulation::run_experiment(&config, &methods, args.replications)?;

    let config_json = serde_json::to_string(&config)
        .map_err(|e| Error::Invalid(format!("cannot encode config: {e}")))?;

    Ok(RunOutput {
        table: table.to_csv_string(),
        output: args.output.clone(),
        logs: vec![format!("config: {config_json}")],
        exit: 0,
    })
}
