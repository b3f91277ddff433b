use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use polylab_cli::{run, Command, RunConfig, RunOptions};

#[derive(Parser)]
#[command(name = "polylab", version, about = "Polyharmonic interface problems: solves, convergence studies and regularity diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the Navier cascade on every configured grid.
    Solve(Flags),
    /// Error against the radial oracle under refinement.
    Convergence(Flags),
    /// Jump laws across the interface and, for m = 2, the regularity sweep.
    Jumps(Flags),
    /// Total-variation profile of the third derivatives for m = 2.
    Tv(Flags),
    /// Radial biharmonic Alt-Caffarelli energy scan.
    Altcaf(Flags),
    /// Distributional Hessian identity of the signed-distance corrector.
    #[command(name = "validate-lemma23")]
    ValidateLemma23(Flags),
}

#[derive(clap::Args)]
struct Flags {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (overrides `run.workers`).
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Make failed assertions fatal (exit status 1).
    #[arg(long)]
    strict: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match cli.command {
        Cmd::Solve(f) => (Command::Solve, f),
        Cmd::Convergence(f) => (Command::Convergence, f),
        Cmd::Jumps(f) => (Command::Jumps, f),
        Cmd::Tv(f) => (Command::Tv, f),
        Cmd::Altcaf(f) => (Command::Altcaf, f),
        Cmd::ValidateLemma23(f) => (Command::ValidateLemma23, f),
    };
    let cfg = match &flags.config {
        Some(path) => RunConfig::load_for(path, command),
        None => RunConfig::defaults_for(command),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("polylab: {e}");
            return ExitCode::from(2);
        }
    };
    if flags.workers == Some(0) {
        eprintln!("polylab: --workers must be at least 1");
        return ExitCode::from(2);
    }
    let opts = RunOptions { out: flags.out, workers: flags.workers, strict: flags.strict };
    match run(&cfg, &opts) {
        Ok(result) => {
            for a in &result.summary.assertions {
                println!(
                    "{} {:<28} {:>12.5e} {:<14} {}",
                    if a.passed { "PASS" } else { "FAIL" },
                    a.id,
                    a.value,
                    a.condition,
                    a.description
                );
            }
            println!("artifacts in {}", result.out_dir.display());
            ExitCode::from(result.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("polylab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
