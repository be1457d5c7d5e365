//! The `affine-kit` command-line front end.

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::closed_forms::{ctmc_oracle_transform, ChainSpec, ClosedForm, WishartSpec};
use crate::error::{Error, Result};
use crate::model::AffineModel;
use crate::presets;
use crate::riccati::{self, solve_riccati, SolveStatus};
use crate::simulate::{simulate, Scheme, SimConfig};
use crate::verify::{run_suite, SuiteOptions};

/// Environment variable consulted when `--threads` is absent.
pub const THREADS_ENV: &str = "AFFINE_KIT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "affine-kit", version, about = "Transforms, paths and checks for affine processes")]
pub struct Cli {
    /// Worker threads for path simulation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate Φ(t,u) e^{<ψ(t,u), x>}.
    Transform(TransformArgs),
    /// Write the Riccati trajectory (φ, ψ) on the solver grid as CSV.
    Riccati(RiccatiArgs),
    /// Sample an ensemble of paths.
    Simulate(SimulateArgs),
    /// Run a verification suite and report JSON.
    Verify(VerifyArgs),
    /// Closed-form values for a named example.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ModelSource {
    /// Model JSON file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Built-in model: brownian, wishart1d, wishart2d, drift, chain_k2, killing.
    #[arg(long)]
    pub example: Option<String>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Also write the resolved model as JSON to this path.
    #[arg(long)]
    pub dump_model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub t: f64,
    /// Comma-separated complex argument, e.g. "-1+0j" or "0.5j,-1".
    #[arg(long, allow_hyphen_values = true)]
    pub u: String,
    /// Comma-separated initial state.
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Write the Riccati solution CSV here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RiccatiArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub u: String,
    #[arg(long)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    /// Euler steps with projection; chain models default to exact events.
    Auto,
    Euler,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: String,
    #[arg(long)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 10_000)]
    pub n_paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Auto)]
    pub scheme: SchemeArg,
    /// Record every n-th step (the final state is always recorded).
    #[arg(long, default_value_t = 1)]
    pub record_stride: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// closed-forms, monte-carlo or all.
    #[arg(long, default_value = "all")]
    pub suite: String,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub n_paths: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// brownian, wishart1d, wishart2d, drift or chain_k2.
    #[arg(long)]
    pub example: String,
    #[arg(long)]
    pub t: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub u: String,
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,
}

/// Parses `a`, `bj`, `a+bj` or `a-bj` (`i` is accepted in place of `j`).
pub fn parse_complex(text: &str) -> Result<Complex64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || Error::Parse(format!("cannot parse complex number {text:?}"));
    let num = |p: &str| p.parse::<f64>().map_err(|_| bad());
    let Some(body) = s.strip_suffix(['j', 'i']) else {
        return Ok(Complex64::new(num(&s)?, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let imag = |p: &str| match p {
        "" | "+" => Ok(1.0),
        "-" => Ok(-1.0),
        _ => num(p),
    };
    match split {
        Some(k) => Ok(Complex64::new(num(&body[..k])?, imag(&body[k..])?)),
        None => Ok(Complex64::new(0.0, imag(body)?)),
    }
}

pub fn parse_complex_list(text: &str) -> Result<Vec<Complex64>> {
    text.split(',').map(parse_complex).collect()
}

pub fn parse_real_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("cannot parse real number {p:?}")))
        })
        .collect()
}

/// `re+imj` with shortest round-trip digits.
pub fn format_complex(z: Complex64) -> String {
    format!("{}{:+}j", z.re, z.im)
}

fn closed_form_by_name(name: &str) -> Result<ClosedForm> {
    Ok(match name {
        "brownian" => ClosedForm::Brownian,
        "wishart1d" => ClosedForm::Wishart(WishartSpec::new(1, 1)?),
        "wishart2d" => ClosedForm::Wishart(WishartSpec::new(2, 1)?),
        "drift" => ClosedForm::Drift {
            b: 1.0,
            big_b: -1.0,
            r1: 0.0,
            r2: 1.0,
        },
        "chain" | "chain_k2" => ClosedForm::Chain(ChainSpec::new(2)?),
        other => {
            return Err(Error::InvalidParameter(format!(
                "no closed form for example {other:?}"
            )))
        }
    })
}

fn load_model(args: &ModelArgs) -> Result<AffineModel> {
    let model = match (&args.source.model, &args.source.example) {
        (Some(path), _) => AffineModel::from_json(&std::fs::read_to_string(path)?)?,
        (None, Some(name)) => presets::by_name(name).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "unknown example {name:?}, expected one of {:?}",
                presets::PRESET_NAMES
            ))
        })?,
        (None, None) => return Err(Error::InvalidParameter("no model given".into())),
    };
    model.validate().into_result()?;
    if let Some(path) = &args.dump_model {
        std::fs::write(path, model.to_json()? + "\n")?;
    }
    Ok(model)
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text)?,
        None => match std::io::stdout().write_all(text.as_bytes()) {
            // a closed pipe (`| head`) is not an error
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
            other => other?,
        },
    }
    Ok(())
}

fn run_transform(args: &TransformArgs) -> Result<i32> {
    let model = load_model(&args.model)?;
    let u = parse_complex_list(&args.u)?;
    let x = parse_real_list(&args.x)?;
    let value = riccati::transform(&model, &x, args.t, &u, args.tol)?;
    if let Some(path) = &args.output {
        if args.t > 0.0 {
            std::fs::write(path, solve_riccati(&model, &u, args.t, args.tol)?.to_csv())?;
        }
    }
    println!("{}", format_complex(value.value));
    if value.killed {
        eprintln!("Riccati solution blows up before t = {}; transform reported as 0", args.t);
        return Ok(2);
    }
    Ok(0)
}

fn run_riccati(args: &RiccatiArgs) -> Result<i32> {
    let model = load_model(&args.model)?;
    let u = parse_complex_list(&args.u)?;
    let sol = solve_riccati(&model, &u, args.horizon, args.tol)?;
    if !matches!(sol.status, SolveStatus::Complete) {
        eprintln!("solver stopped early: {}", sol.status);
    }
    emit(args.output.as_deref(), &sol.to_csv())?;
    Ok(0)
}

fn run_simulate(args: &SimulateArgs) -> Result<i32> {
    let model = load_model(&args.model)?;
    let x0 = parse_real_list(&args.x0)?;
    let is_chain = matches!(model.space, crate::model::StateSpace::FiniteChain { .. });
    let scheme = match args.scheme {
        SchemeArg::Euler => Scheme::EulerProject,
        SchemeArg::Exact => Scheme::GillespieExact,
        SchemeArg::Auto if is_chain && model.validate().passed() => Scheme::GillespieExact,
        SchemeArg::Auto => Scheme::EulerProject,
    };
    let cfg = SimConfig::new(args.dt, args.horizon, args.n_paths, args.seed)
        .with_scheme(scheme)
        .with_record_stride(args.record_stride);
    let ens = match simulate(&model, &x0, &cfg) {
        // chains with drift or diffusion fall back to Euler under `auto`
        Err(Error::InvalidParameter(_)) if args.scheme == SchemeArg::Auto && scheme == Scheme::GillespieExact => {
            simulate(&model, &x0, &cfg.clone().with_scheme(Scheme::EulerProject))?
        }
        other => other?,
    };
    if ens.n_failed() > 0 {
        log::warn!("{} of {} paths failed numerically", ens.n_failed(), ens.n_paths());
    }
    let text = match args.format {
        Format::Csv => ens.to_csv(),
        Format::Json => serde_json::to_string_pretty(&ens.summary())? + "\n",
    };
    emit(args.output.as_deref(), &text)?;
    Ok(0)
}

fn run_verify(args: &VerifyArgs) -> Result<i32> {
    let opts = SuiteOptions {
        seed: args.seed,
        n_paths: args.n_paths,
        dt: args.dt,
    };
    let report = run_suite(&args.suite, &opts)?;
    emit(args.output.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    for check in report.checks.iter().filter(|c| !c.pass) {
        eprintln!("FAIL {}", check.name);
    }
    Ok(if report.pass { 0 } else { 1 })
}

fn run_oracle(args: &OracleArgs) -> Result<i32> {
    let family = closed_form_by_name(&args.example)?;
    let u = parse_complex_list(&args.u)?;
    let x = parse_real_list(&args.x)?;
    let (phi, psi) = family.phi_psi(args.t, &u)?;
    let value = family.transform(args.t, &u, &x)?;
    let mut doc = serde_json::json!({
        "example": family.name(),
        "t": args.t,
        "u": u.iter().map(|z| format_complex(*z)).collect::<Vec<_>>(),
        "x": x,
        "Phi": format_complex(phi),
        "psi": psi.iter().map(|z| format_complex(*z)).collect::<Vec<_>>(),
        "value": format_complex(value),
    });
    if let ClosedForm::Chain(spec) = family {
        let state = x[0].round();
        if (x[0] - state).abs() > 0.0 || state < 0.0 {
            return Err(Error::OutsideStateSpace(x));
        }
        let oracle = ctmc_oracle_transform(spec, args.t, u[0], state as usize)?;
        doc["matrix_exponential"] = format_complex(oracle).into();
    }
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(0)
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Parse(format!("{THREADS_ENV}={v:?} is not a thread count"))),
        _ => Ok(None),
    }
}

/// Executes a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    let body = || match &cli.command {
        Command::Transform(a) => run_transform(a),
        Command::Riccati(a) => run_riccati(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Verify(a) => run_verify(a),
        Command::Oracle(a) => run_oracle(a),
    };
    match thread_count(cli.threads)? {
        Some(0) => Err(Error::InvalidParameter("thread count must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?
            .install(body),
        None => body(),
    }
}

/// Parses `args`, runs the command and maps every outcome to an exit code,
/// printing diagnostics on standard error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
