use clap::Parser;
use hjb_wave::cli::{self, Subcommand, SEED_ENV};
use std::path::PathBuf;
use std::process::ExitCode;

/// Monte Carlo solvers for the HJB equation of a controlled stochastic wave equation.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// One of simulate, solve-bsde, solve-hjb, synthesize, verify, audit-smoothing.
    #[arg(value_parser = parse_subcommand)]
    command: Subcommand,
    /// TOML experiment configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory for artifacts and the manifest.
    #[arg(short, long)]
    out: PathBuf,
}

fn parse_subcommand(s: &str) -> Result<Subcommand, String> {
    s.parse().map_err(|e: hjb_wave::Error| e.to_string())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let env_seed = std::env::var(SEED_ENV).ok();
    match cli::run(args.command, &args.config, &args.out, env_seed.as_deref()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("{}: an enabled assertion failed, see {}", args.command.name(), args.out.join("manifest.json").display());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
