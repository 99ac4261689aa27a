//! `wahba-kit` command-line interface.
//!
//! Exit codes: 0 success, 1 input or configuration error, 2 numerical
//! failure. The error name is the first token on stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::davenport::{build_system, MeasurementSet, ParseError};
use crate::error::Error;
use crate::simkit::{run_campaign_with_workers, CampaignConfig, CampaignRecord, NoiseSpec};
use crate::solvers::{self, recursive_default_tol, Method, RECURSIVE_DEFAULT_MAX_ITER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "wahba-kit", version, about = "Wahba attitude solvers and Monte Carlo harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one measurement file and print a SolveReport as JSON.
    Solve(SolveArgs),
    /// Run a seeded Monte Carlo campaign of the first-order eigenvalue error.
    Simulate(SimulateArgs),
    /// Run every solver on one measurement file.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    #[value(name = "q_method", alias = "q-method")]
    QMethod,
    Quest,
    #[value(name = "first_order", alias = "first-order")]
    FirstOrder,
    Recursive,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::QMethod => Method::QMethod,
            MethodArg::Quest => Method::Quest,
            MethodArg::FirstOrder => Method::FirstOrder,
            MethodArg::Recursive => Method::Recursive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Measurement file: JSON array of {b, r, w} or CSV with bx,by,bz,rx,ry,rz,w.
    #[arg(short, long)]
    pub input: PathBuf,
    /// Input format; inferred from the file extension when omitted.
    #[arg(long, value_enum)]
    pub input_format: Option<Format>,
    /// Normalize b and r before validation instead of rejecting non-unit vectors.
    #[arg(long)]
    pub renormalize: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(short, long, value_enum, default_value = "recursive")]
    pub method: MethodArg,
    /// Stopping tolerance on successive eigenvalue estimates (default 1e-13·λ₀).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = RECURSIVE_DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Write the report here instead of stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Angular noise σ₁ on the first observation, degrees.
    #[arg(long)]
    pub sigma1: f64,
    /// Angular noise σ₂ on the second observation, degrees.
    #[arg(long)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    /// Histogram density ρ_H: samples per bin.
    #[arg(long, default_value_t = 3333)]
    pub rho_h: u64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub w1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w2: f64,
    /// Reject trials with TASTE above GATE·λ₀·σ̄² (off by default).
    #[arg(long)]
    pub taste_gate: Option<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, env = "WAHBA_KIT_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = RECURSIVE_DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// One row of `compare` output. Numeric fields are absent when the method
/// failed; `error` then carries the error name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: Method,
    pub lambda: Option<f64>,
    pub eigen_gap: Option<f64>,
    pub iterations: Option<usize>,
    pub residual: Option<f64>,
    pub taste: Option<f64>,
    pub wall_time_ns: u128,
    pub error: Option<String>,
}

#[derive(Debug)]
enum CliError {
    Io(PathBuf, std::io::Error),
    Parse(ParseError),
    Solver(Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(e) if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_INPUT,
        }
    }

    fn describe(&self) -> String {
        match self {
            CliError::Io(p, e) => format!("IoError: {}: {e}", p.display()),
            CliError::Parse(ParseError::Invalid(e)) => e.to_string(),
            CliError::Parse(e) => format!("ParseError: {e}"),
            CliError::Solver(e) => e.to_string(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Solver(e)
    }
}

/// Parses `args` (including the program name) and runs the command, writing
/// results to `stdout` and diagnostics to `stderr`. Returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(stderr, "{e}") } else { write!(stdout, "{e}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a, stdout),
        Command::Simulate(a) => cmd_simulate(&a, stdout),
        Command::Compare(a) => cmd_compare(&a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.describe());
            e.exit_code()
        }
    }
}

fn read_measurements(args: &InputArgs) -> Result<MeasurementSet, CliError> {
    let text = std::fs::read_to_string(&args.input).map_err(|e| CliError::Io(args.input.clone(), e))?;
    let format = args.input_format.unwrap_or_else(|| infer_format(&args.input));
    match format {
        Format::Json => MeasurementSet::parse_json(&text, args.renormalize),
        Format::Csv => MeasurementSet::parse_csv(text.as_bytes(), args.renormalize),
    }
    .map_err(CliError::Parse)
}

fn infer_format(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
        _ => Format::Json,
    }
}

fn emit(output: Option<&Path>, body: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match output {
        Some(p) => std::fs::write(p, body).map_err(|e| CliError::Io(p.to_path_buf(), e)),
        None => stdout.write_all(body.as_bytes()).map_err(|e| CliError::Io(PathBuf::from("<stdout>"), e)),
    }
}

fn validate_tol(tol: Option<f64>) -> Result<(), CliError> {
    match tol {
        Some(t) if !(t > 0.0) => Err(Error::ConfigError(format!("--tol must be positive, got {t}")).into()),
        _ => Ok(()),
    }
}

fn cmd_solve(args: &SolveArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    validate_tol(args.tol)?;
    let meas = read_measurements(&args.input)?;
    let sys = build_system(&meas);
    let tol = args.tol.unwrap_or_else(|| recursive_default_tol(&sys));
    let report = solvers::solve(&sys, args.method.into(), tol, args.max_iter)?;
    let mut body = serde_json::to_string_pretty(&report).expect("report serializes");
    body.push('\n');
    emit(args.output.as_deref(), &body, stdout)
}

fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let noise = NoiseSpec::new(args.sigma1, args.sigma2)?;
    let config = CampaignConfig {
        n_trials: args.trials,
        noise,
        rho_h: args.rho_h,
        seed: args.seed,
        weights: (args.w1, args.w2),
        taste_gate: args.taste_gate,
    };
    config.validate()?;
    let workers = args.workers.unwrap_or_else(rayon::current_num_threads);
    let histogram = run_campaign_with_workers(&config, workers)?;
    let body = match args.format {
        Format::Csv => histogram.to_csv(),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&CampaignRecord::new(&config, histogram))
                .expect("record serializes");
            s.push('\n');
            s
        }
    };
    emit(args.output.as_deref(), &body, stdout)
}

/// Runs all four solvers. Fails only if the q-Method oracle fails.
pub fn compare_rows(sys: &crate::davenport::DavenportSystem, tol: f64, max_iter: usize) -> Result<Vec<CompareRow>, Error> {
    let mut rows = Vec::with_capacity(4);
    let mut oracle_lambda = None;
    for method in Method::ALL {
        let start = Instant::now();
        let outcome = solvers::solve(sys, method, tol, max_iter);
        let wall_time_ns = start.elapsed().as_nanos();
        match outcome {
            Ok(rep) => {
                if method == Method::QMethod {
                    oracle_lambda = Some(rep.lambda);
                }
                rows.push(CompareRow {
                    method,
                    lambda: Some(rep.lambda),
                    eigen_gap: oracle_lambda.map(|l| (rep.lambda - l).abs()),
                    iterations: Some(rep.iterations),
                    residual: Some(rep.residual),
                    taste: Some(rep.taste),
                    wall_time_ns,
                    error: None,
                });
            }
            Err(e) if method == Method::QMethod => return Err(e),
            Err(e) => rows.push(CompareRow {
                method,
                lambda: None,
                eigen_gap: None,
                iterations: None,
                residual: None,
                taste: None,
                wall_time_ns,
                error: Some(e.name().to_string()),
            }),
        }
    }
    Ok(rows)
}

fn cmd_compare(args: &CompareArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    validate_tol(args.tol)?;
    let meas = read_measurements(&args.input)?;
    let sys = build_system(&meas);
    let tol = args.tol.unwrap_or_else(|| recursive_default_tol(&sys));
    let rows = compare_rows(&sys, tol, args.max_iter)?;
    let body = match args.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&rows).expect("rows serialize");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["method", "lambda", "eigen_gap", "iterations", "residual", "taste", "wall_time_ns", "error"])
                .expect("in-memory csv write");
            let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
            for r in &rows {
                w.write_record([
                    r.method.to_string(),
                    opt(r.lambda),
                    opt(r.eigen_gap),
                    r.iterations.map(|i| i.to_string()).unwrap_or_default(),
                    opt(r.residual),
                    opt(r.taste),
                    r.wall_time_ns.to_string(),
                    r.error.clone().unwrap_or_default(),
                ])
                .expect("in-memory csv write");
            }
            String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
        }
    };
    emit(args.output.as_deref(), &body, stdout)
}
