mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wavekernel::Error;

use commands::{Context, Status};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "wavekernel", version, about = "Transmutation kernels and boundary control for the matrix telegraph equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// run configuration (`key = value` lines)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// output directory
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// overrides the `seed` key of the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// worker threads (defaults to the number of cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve for the transmutation kernel and dump it
    Kernel,
    /// Compute the wave snapshot at time T
    Propagate,
    /// Apply the control operator
    Apply,
    /// Recover a control from a snapshot
    Invert,
    /// Certify the Sobolev bounds of the Volterra part
    Bounds,
    /// Run every consistency check against the configured thresholds
    Validate,
    /// Finite-difference reference solution
    Oracle,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Kernel => "kernel",
            Command::Propagate => "propagate",
            Command::Apply => "apply",
            Command::Invert => "invert",
            Command::Bounds => "bounds",
            Command::Validate => "validate",
            Command::Oracle => "oracle",
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NoConvergence { .. } | Error::SingularBlock { .. } | Error::SingularWeylMatching => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> wavekernel::Result<Status> {
    let path = cli
        .config
        .ok_or_else(|| Error::Parse("--config is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("cannot start {threads} threads: {e}")))?;
    }
    commands::ensure_out_dir(&cli.out)?;
    let mut ctx = Context::new(cfg, cli.out);
    let status = match cli.command {
        Command::Kernel => commands::kernel(&mut ctx),
        Command::Propagate => commands::propagate(&mut ctx),
        Command::Apply => commands::apply(&mut ctx),
        Command::Invert => commands::invert(&mut ctx),
        Command::Bounds => commands::bounds(&mut ctx),
        Command::Validate => commands::validate(&mut ctx),
        Command::Oracle => commands::oracle(&mut ctx),
    }?;
    ctx.write_manifest(cli.command.name())?;
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::ValidationFailed(checks)) => {
            eprintln!("wavekernel {name}: validation failed: {}", checks.join(", "));
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("wavekernel {name}: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
