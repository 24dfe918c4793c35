//! `pdg`: config-driven front end for the dG(0) parabolic solver and its
//! operator and error audits.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Debug)]
pub enum CliError {
    /// Unparseable config, unknown ids, bad values (exit 3).
    Config(String),
    /// A declared assumption does not hold (exit 2).
    Assumption(String),
    /// Budget exceeded (exit 4).
    Resource(String),
    /// Numeric or internal failure (exit 1).
    Numeric(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::Assumption(_) => 2,
            CliError::Resource(_) => 4,
            CliError::Numeric(_) | CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Assumption(m) => write!(f, "assumption violated: {m}"),
            CliError::Resource(m) => write!(f, "{m}"),
            CliError::Numeric(m) => write!(f, "{m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<parabolic_dg::Error> for CliError {
    fn from(e: parabolic_dg::Error) -> Self {
        use parabolic_dg::Error as E;
        match e {
            E::InvalidArgument(_)
            | E::InvalidMesh(_)
            | E::InvalidField(_)
            | E::InsufficientData(_) => CliError::Config(e.to_string()),
            E::ResourceLimit { .. } => CliError::Resource(e.to_string()),
            E::NumericFailure { .. } | E::Internal(_) => CliError::Numeric(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "pdg",
    version,
    about = "dG(0)-in-time, cG(r)-in-space parabolic solver and audits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (parallel builds only).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Reserved; no component is stochastic.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Check grid, mesh and coefficient assumptions.
    Validate,
    /// Solve every run and report regularity functionals.
    Solve,
    /// Operator-calculus audits over the mu sweep.
    Operators,
    /// Error table over the refinement sweep with fitted orders.
    Convergence,
    /// Best-approximation ratios.
    Bestapprox,
}

fn configure_jobs(jobs: Option<usize>) -> Result<(), CliError> {
    let Some(n) = jobs else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Config("--jobs must be positive".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    eprintln!("note: sequential build, --jobs {n} ignored");
    Ok(())
}

fn run(cli: &Cli) -> Result<String, CliError> {
    configure_jobs(cli.jobs)?;
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = ExperimentConfig::load(path)?;
    let out: PathBuf = cli
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let out: &Path = &out;
    match cli.command {
        Command::Validate => commands::validate(&cfg, out),
        Command::Solve => commands::solve_cmd(&cfg, out),
        Command::Operators => commands::operators(&cfg, out),
        Command::Convergence => commands::convergence(&cfg, out),
        Command::Bestapprox => commands::bestapprox(&cfg, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("pdg: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
