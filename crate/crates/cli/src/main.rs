//! `qgpe` command-line driver.

mod commands;
mod config;
mod output;

use clap::{CommandFactory, Parser, Subcommand};
use qgpe::error::QgpeError;

use config::{EvolveArgs, GlobalArgs, GroundArgs, RespondArgs, SpectrumArgs};

#[derive(Debug, Parser)]
#[command(name = "qgpe", version, about = "Continuous matrix product state simulations of the one-dimensional Bose gas")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Uniform ground state by imaginary-time flow.
    Ground(GroundArgs),
    /// Real- or imaginary-time evolution of a checkpointed state.
    Evolve(EvolveArgs),
    /// Linear density response over a k grid.
    Respond(RespondArgs),
    /// Excitation branches over a k grid.
    Spectrum(SpectrumArgs),
    /// Reference values.
    #[command(subcommand)]
    Oracle(commands::OracleCommand),
}

/// A failure together with the process exit code it maps to.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { code: 1, message: message.into() }
    }

    pub fn not_converged(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        CliError { code: 3, message: message.into() }
    }
}

impl From<QgpeError> for CliError {
    fn from(e: QgpeError) -> Self {
        let message = e.to_string();
        match e {
            QgpeError::InvalidInput(_) | QgpeError::DimensionMismatch(_) | QgpeError::Io(_) => CliError::config(message),
            QgpeError::NoConvergence { .. } | QgpeError::NotStationary { .. } | QgpeError::IllConditioned { .. } => {
                CliError::not_converged(message)
            }
            _ => CliError::failure(message),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.global.config {
        Some(p) => config::ConfigFile::load(p)?,
        None => config::ConfigFile::default(),
    };
    let global = file.resolve(&cli.global)?;
    let threads = match global.threads {
        Some(n) => Some(n),
        None => match std::env::var("QGPE_THREADS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| CliError::config(format!("QGPE_THREADS={v:?} is not a count")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::config("thread count must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("cannot start {n} threads: {e}")))?;
    }
    let ctx = commands::Context {
        seed: global.seed.unwrap_or(0),
        out_dir: global.out_dir.clone().unwrap_or_else(|| ".".into()),
    };
    match &cli.command {
        Command::Ground(a) => commands::ground(&ctx, &file.resolve(a)?),
        Command::Evolve(a) => commands::evolve(&ctx, &file.resolve(a)?),
        Command::Respond(a) => commands::respond(&ctx, &file.resolve(a)?),
        Command::Spectrum(a) => commands::spectrum(&ctx, &file.resolve(a)?),
        Command::Oracle(o) => commands::oracle(o),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let _ = e.print();
            std::process::exit(1);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e.message);
        if e.code == 1 {
            eprintln!("{}", Cli::command().render_usage());
        }
        std::process::exit(e.code);
    }
}
