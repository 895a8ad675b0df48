//! `fracpme`: solves the self-similar porous-medium problems and writes the
//! results as CSV or JSON tables.

mod commands;
mod config;
mod table;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::{DateTime, SecondsFormat, Utc};
use clap::{Parser, Subcommand};
use fracpme::Error as CoreError;

use config::{BenchArgs, Command, CommonArgs, FdArgs, ProfileArgs, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Tolerance(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e.root() {
            CoreError::Config(_) | CoreError::Domain { .. } => CliError::Config(msg),
            CoreError::ToleranceNotReached { .. } => CliError::Tolerance(msg),
            _ => CliError::Numerical(msg),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Csv(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Tolerance(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fracpme", version, about = "Self-similar solutions of the time-fractional porous medium equation")]
struct Cli {
    /// JSON run configuration; flags given on the command line override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the fully resolved configuration here before running.
    #[arg(long, global = true)]
    save_config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Sub>,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Nodal solution z, v, y of the Volterra equation.
    Solve(CommonArgs),
    /// Wetting front η* with a self-convergence error estimate.
    Front(CommonArgs),
    /// Aitken convergence-order tables.
    Order(CommonArgs),
    /// Critical exponent m0 for each α.
    M0(CommonArgs),
    /// Finite-difference field and its wetting front.
    Fd {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        fd: FdArgs,
    },
    /// Cost-versus-accuracy comparison of the Volterra and finite-difference solvers.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        bench: BenchArgs,
    },
    /// Profiles u(x, t) for plotting.
    Profile {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        profile: ProfileArgs,
    },
}

impl Sub {
    fn command(&self) -> Command {
        match self {
            Sub::Solve(_) => Command::Solve,
            Sub::Front(_) => Command::Front,
            Sub::Order(_) => Command::Order,
            Sub::M0(_) => Command::M0,
            Sub::Fd { .. } => Command::Fd,
            Sub::Bench { .. } => Command::Bench,
            Sub::Profile { .. } => Command::Profile,
        }
    }

    fn apply(&self, cfg: &mut RunConfig) {
        match self {
            Sub::Solve(c) | Sub::Front(c) | Sub::Order(c) | Sub::M0(c) => c.apply(cfg),
            Sub::Fd { common, fd } => {
                common.apply(cfg);
                fd.apply(cfg);
            }
            Sub::Bench { common, bench } => {
                common.apply(cfg);
                bench.apply(cfg);
            }
            Sub::Profile { common, profile } => {
                common.apply(cfg);
                profile.apply(cfg);
            }
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match (&cli.config, &cli.command) {
        (Some(path), sub) => {
            let cfg = RunConfig::load(path)?;
            if let Some(sub) = sub {
                if sub.command() != cfg.command {
                    return Err(CliError::Config(format!(
                        "configuration is for '{}' but '{}' was requested",
                        cfg.command.name(),
                        sub.command().name()
                    )));
                }
            }
            cfg
        }
        (None, Some(sub)) => RunConfig::defaults(sub.command()),
        (None, None) => return Err(CliError::Config("a subcommand or --config is required".into())),
    };
    if let Some(sub) = &cli.command {
        sub.apply(&mut cfg);
    }
    if cfg.timestamp.is_none() {
        cfg.timestamp = Some(default_timestamp()?);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `SOURCE_DATE_EPOCH` when set, otherwise the current time.
fn default_timestamp() -> Result<String, CliError> {
    let when = match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(s) => {
            let secs: i64 = s.trim().parse().map_err(|_| CliError::Config(format!("SOURCE_DATE_EPOCH = '{s}' is not an integer")))?;
            DateTime::<Utc>::from_timestamp(secs, 0).ok_or_else(|| CliError::Config(format!("SOURCE_DATE_EPOCH = {secs} out of range")))?
        }
        Err(_) => Utc::now(),
    };
    Ok(when.to_rfc3339_opts(SecondsFormat::Secs, true))
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(s) = std::env::var("FRACPME_THREADS") {
        let threads: usize = s.trim().parse().map_err(|_| CliError::Config(format!("FRACPME_THREADS = '{s}' is not a positive integer")))?;
        fracpme::exec::configure_threads(threads)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    configure_threads()?;
    let cfg = resolve_config(cli)?;
    if let Some(path) = &cli.save_config {
        table::write_atomic(path, cfg.to_json().as_bytes())?;
    }
    let outcome = commands::dispatch(&cfg)?;
    let timestamp = cfg.timestamp.as_deref().unwrap_or_default();
    let bytes = outcome.table.render(cfg.format, cfg.command.name(), timestamp)?;
    match &cfg.output_path {
        Some(path) => table::write_atomic(path, &bytes)?,
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fracpme: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
