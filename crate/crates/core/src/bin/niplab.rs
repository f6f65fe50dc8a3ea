use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use niplab::runner::{run_command, Command, Config, RunnerError};

#[derive(Parser)]
#[command(name = "niplab", version, about = "Coefficient identification experiments for Neumann parabolic problems")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Compare boundary traces for two coefficients
    Uniqueness(Common),
    /// Recover and match decay rates from boundary traces
    Corollary(Common),
    /// Sample the Carleman inequalities over a range of s
    Audit(Common),
    /// Compute the support region, Gamma and the reachable subdomain
    Omega(Common),
    /// Check decay conditions and the per-mode projection bound
    Decay(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file with `section.key = value` lines
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Overrides `run.seed`
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Sub::Uniqueness(a) => (Command::Uniqueness, a),
        Sub::Corollary(a) => (Command::Corollary, a),
        Sub::Audit(a) => (Command::Audit, a),
        Sub::Omega(a) => (Command::Omega, a),
        Sub::Decay(a) => (Command::Decay, a),
    };
    let result = Config::from_file(&args.config, args.seed).and_then(|cfg| run_command(cmd, &cfg, &args.out));
    match result {
        Ok(outcome) => {
            for m in &outcome.manifest {
                println!("{}  {}", m.sha256, m.file);
            }
            if outcome.pass {
                ExitCode::SUCCESS
            } else {
                eprintln!("{}: criterion failed (see summary.csv)", cmd.name());
                ExitCode::from(2)
            }
        }
        Err(RunnerError::Criterion(why)) => {
            eprintln!("{}: {why}", cmd.name());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
