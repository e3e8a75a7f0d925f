//! slslab: experiment runner for the slskit penalized-MLE toolkit.
//!
//! Exit codes: 0 success, 2 config error, 3 numeric failure,
//! 4 certificate preconditions failed (reports still written).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slslab::commands;
use slslab::config::{self, parse};
use slslab::{config_hash, HResult, HarnessError, RunContext};

#[derive(Parser)]
#[command(
    name = "slslab",
    version,
    about = "Deviation-bound quantiles, penalized-MLE certificates, and penalty-design experiments"
)]
struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; required for stochastic commands, no wall-clock defaults.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = library default). Never changes output bytes.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantile curves (gauss/fused/majorant) with optional MC exceedance.
    Tail,
    /// Two-sided concentration of ‖QX‖² for sums of i.i.d. vectors.
    IidSandwich,
    /// One penalized-MLE fit.
    Fit,
    /// Replicated Fisher/Wilks/bias expansion certificates.
    Certify,
    /// Bias-variance risk sandwich.
    Risk,
    /// Oracle cut-off rate sweep in the sequence-space model.
    Rate,
    /// Tensor-family covariance and tail validation.
    Tensor,
}

fn run(cli: &Cli) -> HResult<Vec<PathBuf>> {
    let config_text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Io { path: path.display().to_string(), source: e })?,
        None => return Err(HarnessError::Config("--config PATH is required".into())),
    };
    let ctx = RunContext {
        seed: cli.seed,
        out_dir: cli.out.clone(),
        threads: cli.threads,
        config_hash: config_hash(&config_text, cli.seed),
    };
    match cli.command {
        Command::Tail => commands::cmd_tail(&parse::<config::TailConfigDoc>(&config_text)?, &ctx),
        Command::IidSandwich => {
            commands::cmd_iid_sandwich(&parse::<config::IidConfigDoc>(&config_text)?, &ctx)
        }
        Command::Fit => commands::cmd_fit(&parse::<config::FitConfigDoc>(&config_text)?, &ctx),
        Command::Certify => {
            commands::cmd_certify(&parse::<config::CertifyConfigDoc>(&config_text)?, &ctx)
        }
        Command::Risk => commands::cmd_risk(&parse::<config::RiskConfigDoc>(&config_text)?, &ctx),
        Command::Rate => commands::cmd_rate(&parse::<config::RateConfigDoc>(&config_text)?, &ctx),
        Command::Tensor => {
            commands::cmd_tensor(&parse::<config::TensorConfigDoc>(&config_text)?, &ctx)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
