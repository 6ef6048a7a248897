use clap::{Args, Parser, Subcommand};
use floquet_core::Execution;
use floquet_sep::config::{load_config, Experiment};
use floquet_sep::scenario::{run_scenario, RunOptions};
use std::path::PathBuf;
use std::process::ExitCode;

/// Principal Floquet bundle and exponential separation experiments for
/// nonautonomous parabolic equations.
#[derive(Parser)]
#[command(name = "floquet-sep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lowest eigenvalues of the discrete elliptic operator.
    Spectrum(Common),
    /// Forward trajectory from the configured initial profile.
    Simulate(Common),
    /// Principal and dual vectors, hull samples and invariance defects.
    Bundle(Common),
    /// Separation rate and constants over the hull samples.
    Separation(Common),
    /// Uniqueness of globally positive solutions up to a positive factor.
    Uniqueness(Common),
    /// Distance of pullback solutions from the principal bundle.
    Membership(Common),
    /// Every experiment listed in `experiment.run` (all of them by default).
    All(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory; overrides `experiment.output`.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Random seed; overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Run on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (single, common) = match cli.command {
        Command::Spectrum(c) => (Some(Experiment::Spectrum), c),
        Command::Simulate(c) => (Some(Experiment::Simulate), c),
        Command::Bundle(c) => (Some(Experiment::Bundle), c),
        Command::Separation(c) => (Some(Experiment::Separation), c),
        Command::Uniqueness(c) => (Some(Experiment::Uniqueness), c),
        Command::Membership(c) => (Some(Experiment::Membership), c),
        Command::All(c) => (None, c),
    };
    let cfg = match load_config(&common.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("invalid scenario {}:\n{e}", common.config.display());
            return ExitCode::from(floquet_sep::scenario::EXIT_CONFIG as u8);
        }
    };
    let requested = match single {
        Some(e) => vec![e],
        None => cfg.experiment.run.clone().unwrap_or_else(|| Experiment::ALL.to_vec()),
    };
    let opts = RunOptions {
        out: common.out,
        seed: common.seed,
        exec: if common.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        },
    };
    match run_scenario(&cfg, &requested, &opts) {
        Ok(manifest) => {
            for w in &manifest.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(d) = &manifest.diagnostic {
                eprintln!("{} failed ({}): {}", d.experiment, d.kind, d.message);
            }
            for f in &manifest.outputs {
                println!("{}", f.file);
            }
            ExitCode::from(manifest.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
