use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bompc_cli::config::RunConfig;
use bompc_cli::io::parse_theta;
use bompc_cli::run::{cmd_eval, cmd_simulate, cmd_tune};
use bompc_cli::CliError;

/// Closed-loop autotuning of a battery fast-charging MPC.
#[derive(Parser)]
#[command(name = "bompc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop charging episode at the case's default parameters
    Simulate(CommonArgs),
    /// Tune the case's parameters over repeated episodes
    Tune(CommonArgs),
    /// Run one episode at a saved parameter vector
    Eval(EvalArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file (flat key = value lines)
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out_dir` from the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tuning seed (overrides `bo_seed` from the config)
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite existing output files
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Parameter vector file (JSON array or `best_theta.json`)
    #[arg(long)]
    theta: PathBuf,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = RunConfig::from_file(&args.config)?;
            let out = args.out.unwrap_or_else(|| cfg.out_dir.clone());
            cmd_simulate(cfg, out, args.force)
        }
        Command::Tune(args) => {
            let cfg = RunConfig::from_file(&args.config)?;
            let out = args.out.unwrap_or_else(|| cfg.out_dir.clone());
            cmd_tune(cfg, out, args.seed, args.force)
        }
        Command::Eval(args) => {
            let cfg = RunConfig::from_file(&args.common.config)?;
            let out = args.common.out.unwrap_or_else(|| cfg.out_dir.clone());
            let text = std::fs::read_to_string(&args.theta).map_err(|e| {
                CliError::Config(format!("cannot read theta {}: {e}", args.theta.display()))
            })?;
            let theta = parse_theta(&text)?;
            cmd_eval(cfg, out, theta, args.common.force)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("bompc: error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
