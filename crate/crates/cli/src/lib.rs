//! Command-line front end of the boltzkit toolbox.
//!
//! Every subcommand resolves its configuration (file plus flags), digests it,
//! and emits JSON-lines records wrapped in an envelope
//! `{command, config_digest, seed, record}`. With `--output-dir` the records go
//! to `<dir>/<command>.jsonl` and tabular diagnostics to CSV files whose first
//! line is `# config_digest=<hex> seed=<n>`; otherwise records go to standard
//! output. Nothing time-dependent is ever written, so identical inputs give
//! byte-identical outputs.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use boltzkit::report::{config_digest, write_json_line};
use boltzkit::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

/// Exit code of a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit code of a failed verification or an unexpected error.
pub const EXIT_FAILURE: i32 = 1;
/// Exit code of invalid input (arguments, configuration, preconditions).
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code of a numerical abort.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "boltzkit", version, about = "Numerical toolbox for the non-cutoff Boltzmann equation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON configuration file of the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory receiving the JSON-lines and CSV artifacts.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Seed of every random sample drawn by the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Validate and print the resolved plan without computing.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Angular constants λ_l, ω_l, A_{γ,s} and their asymptotic fit.
    Constants(ConstantsArgs),
    /// Weight-ladder selection and its constraint values.
    Weights(WeightsArgs),
    /// Change-of-variable identities of the collision geometry.
    GeometryCheck(GeometryArgs),
    /// Collision operator on one grid, with conservation and θ_min studies.
    Qeval(QevalArgs),
    /// Norm ladder of one field.
    Norms,
    /// One empirical inequality or symbol estimate.
    Verify(VerifyArgs),
    /// Picard iteration of the regularised problem.
    Evolve,
    /// Picard iteration over a list of regularisation strengths.
    Sweep,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConstantsArgs {
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub s: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b0: f64,
    /// Weight orders: `a..b` (powers of two in `[a, b]`) or a comma list.
    #[arg(long, default_value = "2..256")]
    pub l: String,
    /// Relative tolerance of the angular quadratures.
    #[arg(long, default_value_t = boltzkit::kernel::DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct WeightsArgs {
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub s: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub m0: f64,
    #[arg(long = "M0", default_value_t = 1.0)]
    pub big_m0: f64,
    #[arg(long, default_value_t = boltzkit::kernel::DEFAULT_TILDE_C0)]
    pub tilde_c0: f64,
    /// Search step of `ℓ₁` above `13/2 + γ`.
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryKind {
    PrePost,
    CarlemanCos,
    CarlemanSin,
    All,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GeometryArgs {
    #[arg(long, value_enum, default_value_t = GeometryKind::All)]
    pub kind: GeometryKind,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QevalArgs {
    /// Also run the θ_min study (three halvings and a Richardson estimate).
    #[arg(long)]
    pub theta_study: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyName {
    Cancellation,
    MomentBound,
    Coercivity,
    Trilinear,
    Commutator,
    Embedding,
    Spatial,
    Smallness,
    SymbolUnweighted,
    SymbolWeighted,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub name: VerifyName,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Constants(_) => "constants",
            Command::Weights(_) => "weights",
            Command::GeometryCheck(_) => "geometry-check",
            Command::Qeval(_) => "qeval",
            Command::Norms => "norms",
            Command::Verify(_) => "verify",
            Command::Evolve => "evolve",
            Command::Sweep => "sweep",
        }
    }
}

/// Result of one subcommand before it is written out.
#[derive(Debug, Default)]
pub struct Outcome {
    /// JSON-lines records (without the envelope).
    pub records: Vec<Value>,
    /// `(file name, body)` of CSV artifacts (without the digest header).
    pub csv: Vec<(String, String)>,
    /// False when a verification failed.
    pub pass: bool,
}

impl Outcome {
    pub fn passing(records: Vec<Value>) -> Self {
        Outcome {
            records,
            csv: Vec::new(),
            pass: true,
        }
    }
}

/// Resolved, validated plan of a subcommand; the digest is taken over it.
pub struct Plan {
    pub command: String,
    pub resolved: Value,
    pub digest: String,
    pub seed: u64,
}

#[derive(Serialize)]
struct Envelope<'a> {
    command: &'a str,
    config_digest: &'a str,
    seed: u64,
    record: &'a Value,
}

#[derive(Serialize)]
struct DryRun<'a> {
    command: &'a str,
    config_digest: &'a str,
    seed: u64,
    dry_run: bool,
    plan: &'a Value,
}

/// Maps a toolbox error onto the documented exit codes.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Validation(_) => EXIT_VALIDATION,
        Error::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_FAILURE,
    }
}

/// Parses `argv` (program name first), executes the subcommand and returns the
/// process exit code. Diagnostics go to standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(pass) => {
            if pass {
                EXIT_OK
            } else {
                EXIT_FAILURE
            }
        }
        Err(e) => {
            eprintln!("boltzkit {}: {e}", cli.command.name());
            exit_code(&e)
        }
    }
}

fn execute(cli: &Cli) -> boltzkit::Result<bool> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads)
        .build()
        .map_err(|e| Error::Validation(format!("cannot build thread pool: {e}")))?;
    pool.install(|| {
        let (plan, job) = commands::prepare(&cli.command, &cli.global)?;
        if cli.global.dry_run {
            let line = DryRun {
                command: &plan.command,
                config_digest: &plan.digest,
                seed: plan.seed,
                dry_run: true,
                plan: &plan.resolved,
            };
            write_json_line(std::io::stdout().lock(), &line)?;
            return Ok(true);
        }
        let outcome = job.run()?;
        emit(&plan, &outcome, cli.global.output_dir.as_deref())?;
        Ok(outcome.pass)
    })
}

/// Builds a plan from a serialisable resolved configuration.
pub fn plan_for<T: Serialize>(command: &str, resolved: &T, seed: u64) -> boltzkit::Result<Plan> {
    let resolved = serde_json::to_value(resolved)?;
    let digest = config_digest(&(command, &resolved, seed))?;
    Ok(Plan {
        command: command.to_string(),
        resolved,
        digest,
        seed,
    })
}

/// Renders the envelope lines of an outcome.
pub fn render_records(plan: &Plan, outcome: &Outcome) -> boltzkit::Result<Vec<u8>> {
    let mut buf = Vec::new();
    for r in &outcome.records {
        let env = Envelope {
            command: &plan.command,
            config_digest: &plan.digest,
            seed: plan.seed,
            record: r,
        };
        write_json_line(&mut buf, &env)?;
    }
    Ok(buf)
}

/// Header line of every CSV artifact.
pub fn csv_header(plan: &Plan) -> String {
    format!("# config_digest={} seed={}\n", plan.digest, plan.seed)
}

fn emit(plan: &Plan, outcome: &Outcome, dir: Option<&Path>) -> boltzkit::Result<()> {
    let lines = render_records(plan, outcome)?;
    match dir {
        None => {
            use std::io::Write;
            std::io::stdout().lock().write_all(&lines)?;
        }
        Some(d) => {
            std::fs::create_dir_all(d)?;
            std::fs::write(d.join(format!("{}.jsonl", plan.command)), &lines)?;
            for (name, body) in &outcome.csv {
                std::fs::write(d.join(name), format!("{}{}", csv_header(plan), body))?;
            }
        }
    }
    Ok(())
}
