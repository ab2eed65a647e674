//! Thin command-line front end over the library pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use subseasonal_abc::cli::{run_command, CommandArgs, CommandKind};

#[derive(Parser)]
#[command(
    name = "sabc",
    about = "Subseasonal forecast post-processing: scenario generation, adaptive bias correction, verification, and opportunistic deployment",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides config.out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Top-level seed (overrides config.seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long)]
    jobs: Option<usize>,
    /// Corrector/baseline model (overrides correct.model):
    /// dynpp, climpp, perpp, abc, qm, loess, opdebias, mmm.
    #[arg(long)]
    model: Option<String>,
    /// Forecast task, e.g. tmp2m_34w or precip_56w.
    #[arg(long)]
    task: Option<String>,
    /// Permit hyperparameter grids outside the standard candidate sets.
    #[arg(long)]
    allow_custom_grid: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario (observations, forecasts, truth record).
    Generate(Common),
    /// Run a corrector or baseline over all admissible target dates.
    Correct(Common),
    /// Verify a forecast stream: skill, bias, CRPS/BSS, summary tables.
    Evaluate(Common),
    /// Run the opportunistic deployment workflow on two forecast streams.
    Explain(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::Generate(c) => (CommandKind::Generate, c),
        Command::Correct(c) => (CommandKind::Correct, c),
        Command::Evaluate(c) => (CommandKind::Evaluate, c),
        Command::Explain(c) => (CommandKind::Explain, c),
    };
    let args = CommandArgs {
        config: common.config,
        out: common.out,
        seed: common.seed,
        jobs: common.jobs,
        model: common.model,
        task: common.task,
        allow_custom_grid: common.allow_custom_grid,
    };
    match run_command(kind, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
